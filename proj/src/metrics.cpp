#include "vaecf/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "vaecf/error.hpp"
#include "vaecf/model.hpp"

namespace vaecf {

namespace {

std::vector<std::uint32_t> candidate_items(std::span<const double> scores,
                                           std::span<const std::uint8_t> candidates) {
    if (!candidates.empty() && candidates.size() != scores.size()) {
        throw ShapeError("rank: candidate mask length does not match scores");
    }
    std::vector<std::uint32_t> items;
    items.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (candidates.empty() || candidates[i] != 0) items.push_back(static_cast<std::uint32_t>(i));
    }
    return items;
}

struct BestFirst {
    std::span<const double> scores;
    bool operator()(std::uint32_t a, std::uint32_t b) const {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    }
};

bool contains(std::span<const std::uint32_t> sorted, std::uint32_t item) {
    return std::binary_search(sorted.begin(), sorted.end(), item);
}

void require_held_out(std::span<const std::uint32_t> held_out, std::size_t r) {
    if (held_out.empty()) throw UndefinedMetricError("ranking metric undefined for empty held-out set");
    if (r == 0) throw ConfigError("metric cutoff must be >= 1");
}

}  // namespace

RankedList rank(std::span<const double> scores, std::span<const std::uint8_t> candidates) {
    RankedList out{candidate_items(scores, candidates)};
    std::sort(out.order.begin(), out.order.end(), BestFirst{scores});
    return out;
}

RankedList top_r(std::span<const double> scores, std::size_t r, std::span<const std::uint8_t> candidates) {
    RankedList out{candidate_items(scores, candidates)};
    const std::size_t k = std::min(r, out.order.size());
    std::partial_sort(out.order.begin(), out.order.begin() + static_cast<std::ptrdiff_t>(k), out.order.end(),
                      BestFirst{scores});
    out.order.resize(k);
    return out;
}

double recall_at_r(const RankedList& ranked, std::span<const std::uint32_t> held_out, std::size_t r) {
    require_held_out(held_out, r);
    const std::size_t depth = std::min(r, ranked.order.size());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < depth; ++k) hits += contains(held_out, ranked.order[k]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(std::min(r, held_out.size()));
}

double ndcg_at_r(const RankedList& ranked, std::span<const std::uint32_t> held_out, std::size_t r,
                 double log_base) {
    require_held_out(held_out, r);
    const double log_of_base = std::log(log_base);
    const auto discount = [&](std::size_t rank_1based) {
        const auto arg = static_cast<double>(rank_1based + 1);
        return 1.0 / (log_base == 2.0 ? std::log2(arg) : std::log(arg) / log_of_base);
    };
    const std::size_t depth = std::min(r, ranked.order.size());
    double dcg = 0.0;
    for (std::size_t k = 0; k < depth; ++k) {
        if (contains(held_out, ranked.order[k])) dcg += discount(k + 1);
    }
    double idcg = 0.0;
    const std::size_t ideal_hits = std::min(r, held_out.size());
    for (std::size_t k = 0; k < ideal_hits; ++k) idcg += discount(k + 1);
    return dcg / idcg;
}

std::string MetricSpec::name() const {
    return std::string(kind == MetricKind::kRecall ? "recall" : "ndcg") + "@" + std::to_string(cutoff);
}

MetricSpec parse_metric(const std::string& text) {
    const auto at = text.find('@');
    if (at == std::string::npos) throw ConfigError("metric '" + text + "' must look like ndcg@100");
    MetricSpec spec;
    std::string name = text.substr(0, at);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == "recall") {
        spec.kind = MetricKind::kRecall;
    } else if (name == "ndcg") {
        spec.kind = MetricKind::kNdcg;
    } else {
        throw ConfigError("unknown metric '" + text + "'");
    }
    const std::string cutoff = text.substr(at + 1);
    const auto* end = cutoff.data() + cutoff.size();
    auto [ptr, ec] = std::from_chars(cutoff.data(), end, spec.cutoff);
    if (ec != std::errc() || ptr != end || spec.cutoff == 0) {
        throw ConfigError("bad cutoff in metric '" + text + "'");
    }
    return spec;
}

std::vector<MetricSpec> parse_metric_list(const std::string& text) {
    std::vector<MetricSpec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char c) { return std::isspace(c); }),
                   item.end());
        if (!item.empty()) out.push_back(parse_metric(item));
    }
    if (out.empty()) throw ConfigError("empty metric list");
    return out;
}

double compute_metric(const MetricSpec& metric, const RankedList& ranked,
                      std::span<const std::uint32_t> held_out) {
    return metric.kind == MetricKind::kRecall ? recall_at_r(ranked, held_out, metric.cutoff)
                                              : ndcg_at_r(ranked, held_out, metric.cutoff);
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std_error = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

EvalResult evaluate_scorer(const BatchScorer& scorer, std::size_t n_items, const EvalSplit& split,
                           const EvalOptions& options) {
    if (options.metrics.empty()) throw ConfigError("no metrics requested");
    const std::size_t n = split.size();
    const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);
    const std::size_t n_batches = (n + batch_size - 1) / batch_size;
    std::size_t max_cutoff = 0;
    for (const auto& m : options.metrics) max_cutoff = std::max(max_cutoff, m.cutoff);

    std::vector<std::vector<double>> values(options.metrics.size(), std::vector<double>(n, 0.0));
    std::vector<std::uint8_t> dropped(n, 0);

    const auto run_batch = [&](std::size_t b) {
        const std::size_t lo = b * batch_size;
        const std::size_t hi = std::min(n, lo + batch_size);
        const Matrix scores = scorer(to_dense(std::span(split.fold_in).subspan(lo, hi - lo), n_items));
        if (scores.rows() != hi - lo || scores.cols() != n_items) {
            throw ShapeError("scorer returned " + shape_string(scores) + " for a batch of " +
                             std::to_string(hi - lo));
        }
        std::vector<std::uint8_t> mask(n_items);
        for (std::size_t k = lo; k < hi; ++k) {
            std::fill(mask.begin(), mask.end(), 1);
            for (auto i : split.fold_in[k]) mask[i] = 0;
            const auto ranked = top_r(scores.row(k - lo), max_cutoff, mask);
            try {
                for (std::size_t m = 0; m < options.metrics.size(); ++m) {
                    values[m][k] = compute_metric(options.metrics[m], ranked, split.held_out[k]);
                }
            } catch (const UndefinedMetricError&) {
                dropped[k] = 1;
            }
        }
    };

    const std::size_t n_threads = std::min(std::max<std::size_t>(1, options.threads), n_batches);
    if (n_threads <= 1) {
        for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(n_threads);
        std::vector<std::thread> workers;
        for (std::size_t t = 0; t < n_threads; ++t) {
            workers.emplace_back([&, t] {
                try {
                    for (std::size_t b; (b = next.fetch_add(1)) < n_batches;) run_batch(b);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    EvalResult result;
    result.metrics = options.metrics;
    result.per_user.resize(options.metrics.size());
    for (std::size_t k = 0; k < n; ++k) {
        if (dropped[k]) {
            ++result.dropped_users;
            continue;
        }
        result.users.push_back(static_cast<std::uint32_t>(k));
        result.fold_in_sizes.push_back(split.fold_in[k].size());
        for (std::size_t m = 0; m < options.metrics.size(); ++m) result.per_user[m].push_back(values[m][k]);
    }
    for (const auto& v : result.per_user) result.summary.push_back(summarize(v));
    return result;
}

EvalResult evaluate_model(const Model& model, const EvalSplit& split, const EvalOptions& options) {
    const BatchScorer scorer = [&model](const Matrix& x) { return predict_batch(model.params, model.spec, x); };
    return evaluate_scorer(scorer, model.spec.n_items, split, options);
}

std::string format_eval_report(const EvalResult& result) {
    std::ostringstream out;
    out.precision(10);
    out << "metric,mean,stderr,n_users\n";
    for (std::size_t m = 0; m < result.metrics.size(); ++m) {
        const auto& s = result.summary[m];
        out << result.metrics[m].name() << ',' << s.mean << ',' << s.std_error << ',' << s.n << '\n';
    }
    return out.str();
}

std::string format_per_user(const EvalResult& result, const SparseClicks& heldout, const EvalSplit& split) {
    std::ostringstream out;
    out.precision(10);
    out << "user_id,fold_in_size";
    for (const auto& m : result.metrics) out << ',' << m.name();
    out << '\n';
    for (std::size_t k = 0; k < result.users.size(); ++k) {
        out << heldout.user_ids()[split.users[result.users[k]]] << ',' << result.fold_in_sizes[k];
        for (const auto& v : result.per_user) out << ',' << v[k];
        out << '\n';
    }
    return out.str();
}

}  // namespace vaecf
