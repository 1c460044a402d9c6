#include "vaecf/trainer.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vaecf/error.hpp"
#include "vaecf/rng.hpp"

namespace vaecf {

namespace {

constexpr std::uint64_t kStreamModelInit = 0x4d49;
constexpr std::uint64_t kStreamShuffle = 0x5348;
constexpr std::uint64_t kStreamStep = 0x5354;

std::vector<std::vector<std::size_t>> make_bins(std::span<const std::size_t> fold_in_sizes, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("activity breakdown needs at least one bin");
    std::vector<std::size_t> order(fold_in_sizes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fold_in_sizes[a] < fold_in_sizes[b]; });
    const std::size_t n = order.size();
    std::vector<std::vector<std::size_t>> bins(n_bins);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t size = n / n_bins + (b < n % n_bins ? 1 : 0);
        bins[b].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return bins;
}

std::vector<double> gather(std::span<const double> values, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(values[i]);
    return out;
}

std::pair<std::size_t, std::size_t> activity_range(std::span<const std::size_t> sizes,
                                                   const std::vector<std::size_t>& idx) {
    if (idx.empty()) return {0, 0};
    return {sizes[idx.front()], sizes[idx.back()]};
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    anneal.validate();
    adam.validate();
}

TrainResult train(const SparseClicks& train_clicks, const SparseClicks& validation,
                  const EvalSplit& validation_split, const ModelSpec& spec, const TrainConfig& config) {
    config.validate();
    spec.validate();
    if (train_clicks.n_items() != spec.n_items || validation.n_items() != spec.n_items) {
        throw ConfigError("training, validation and model item spaces differ");
    }
    if (train_clicks.item_ids() != validation.item_ids()) {
        throw ConfigError("training and validation corpora use different item vocabularies");
    }
    if (train_clicks.n_users() == 0) throw EmptyCorpusError("no training users");

    Model model = make_model(spec, derive_seed(config.seed, kStreamModelInit), train_clicks.item_ids());
    AdamState adam(config.adam);
    EvalOptions eval_options;
    eval_options.metrics = {config.validation_metric};
    eval_options.batch_size = config.eval_batch_size;
    eval_options.threads = config.eval_threads;

    TrainResult result;
    result.best_model = model;
    auto& report = result.report;
    report.best_metric = -std::numeric_limits<double>::infinity();
    bool checkpoint_written = false;

    std::optional<double> frozen_beta;
    std::size_t evals_without_improvement = 0;
    const auto current_beta = [&](std::uint64_t step) {
        return frozen_beta ? *frozen_beta : beta_at(config.anneal, step);
    };

    std::uint64_t step = 0;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    const auto validate_now = [&](std::size_t epoch) {
        HistoryEntry entry;
        entry.epoch = epoch;
        entry.step = step;
        entry.beta = current_beta(step);
        entry.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
        const auto eval = evaluate_model(model, validation_split, eval_options);
        entry.metric = eval.summary.front().mean;
        loss_sum = 0.0;
        loss_count = 0;
        report.history.push_back(entry);

        if (entry.metric > report.best_metric) {
            report.best_metric = entry.metric;
            report.best_step = step;
            report.beta_best = entry.beta;
            result.best_model = model;
            evals_without_improvement = 0;
            if (config.checkpoint_path) {
                save_checkpoint(*config.checkpoint_path, model);
                report.best_checkpoint = config.checkpoint_path;
                checkpoint_written = true;
            }
        } else if (config.anneal_patience > 0 && !frozen_beta &&
                   ++evals_without_improvement >= config.anneal_patience) {
            frozen_beta = report.beta_best;
        }
    };

    const std::size_t n_users = train_clicks.n_users();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, kStreamShuffle, epoch));
        const auto perm = random_permutation(n_users, shuffle_rng);
        for (std::size_t lo = 0; lo < n_users; lo += config.batch_size) {
            const auto batch = std::span(perm).subspan(lo, std::min(config.batch_size, n_users - lo));
            ObjectiveOptions options;
            options.beta = current_beta(step);
            options.weight_decay = config.weight_decay;
            options.seed = derive_seed(config.seed, kStreamStep, step);
            options.train_mode = true;
            try {
                auto obj = objective_and_grads(model.params, spec, to_dense(train_clicks, batch), options);
                adam_step(adam, model.params.spans(), std::as_const(obj.grads).spans());
                loss_sum += obj.loss;
                ++loss_count;
                if (config.on_step) config.on_step({epoch, step, options.beta, obj.loss, batch});
            } catch (const NumericError& e) {
                // Parameters are untouched by the failed step, so they are the last good state.
                if (config.checkpoint_path && !checkpoint_written) save_checkpoint(*config.checkpoint_path, model);
                throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what());
            }
            ++step;
            if (config.eval_every > 0 && step % config.eval_every == 0) validate_now(epoch);
        }
        if (config.eval_every == 0) validate_now(epoch);
    }
    if (report.history.empty() || report.history.back().step != step) validate_now(config.epochs - 1);
    return result;
}

TwoPhaseResult train_two_phase(const SparseClicks& train_clicks, const SparseClicks& validation,
                               const EvalSplit& validation_split, const ModelSpec& spec,
                               const TrainConfig& config) {
    TwoPhaseResult out;
    TrainConfig search = config;
    search.anneal.beta_cap = 1.0;
    search.anneal_patience = 0;
    search.checkpoint_path.reset();
    out.search = train(train_clicks, validation, validation_split, spec, search).report;

    std::vector<ValidationPoint> points;
    for (const auto& h : out.search.history) points.push_back({h.step, h.metric});
    TrainConfig final_config = config;
    final_config.anneal.beta_cap = capture_best_beta(search.anneal, points);
    // Same slope as the search run: beta reaches the cap proportionally earlier.
    final_config.anneal.total_anneal_steps = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(search.anneal.total_anneal_steps) * final_config.anneal.beta_cap));
    final_config.anneal_patience = 0;
    out.final = train(train_clicks, validation, validation_split, spec, final_config);
    return out;
}

std::vector<double> popularity_baseline(const SparseClicks& train_clicks) {
    if (train_clicks.nnz() == 0) throw EmptyCorpusError("popularity baseline needs a non-empty corpus");
    const auto counts = train_clicks.item_counts();
    return {counts.begin(), counts.end()};
}

BatchScorer popularity_scorer(std::vector<double> scores) {
    return [scores = std::move(scores)](const Matrix& x) {
        Matrix out(x.rows(), scores.size());
        for (std::size_t r = 0; r < x.rows(); ++r) std::copy(scores.begin(), scores.end(), out.row(r).begin());
        return out;
    };
}

std::vector<ActivityBin> activity_breakdown(std::span<const double> values,
                                            std::span<const std::size_t> fold_in_sizes, std::size_t n_bins) {
    if (values.size() != fold_in_sizes.size()) throw ShapeError("activity_breakdown: length mismatch");
    std::vector<ActivityBin> out;
    for (const auto& idx : make_bins(fold_in_sizes, n_bins)) {
        ActivityBin bin;
        std::tie(bin.min_activity, bin.max_activity) = activity_range(fold_in_sizes, idx);
        bin.summary = summarize(gather(values, idx));
        out.push_back(bin);
    }
    return out;
}

std::vector<PairedBin> paired_activity_breakdown(std::span<const double> first, std::span<const double> second,
                                                 std::span<const std::size_t> fold_in_sizes,
                                                 std::size_t n_bins) {
    if (first.size() != fold_in_sizes.size() || second.size() != fold_in_sizes.size()) {
        throw ShapeError("paired_activity_breakdown: length mismatch");
    }
    std::vector<PairedBin> out;
    for (const auto& idx : make_bins(fold_in_sizes, n_bins)) {
        PairedBin bin;
        std::tie(bin.min_activity, bin.max_activity) = activity_range(fold_in_sizes, idx);
        const auto a = gather(first, idx);
        const auto b = gather(second, idx);
        bin.first = summarize(a);
        bin.second = summarize(b);
        std::vector<double> diff(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
        const auto d = summarize(diff);
        bin.mean_difference = d.mean;
        if (d.n >= 2) {
            if (d.std_error > 0.0) {
                bin.t_statistic = d.mean / d.std_error;
                boost::math::students_t dist(static_cast<double>(d.n - 1));
                bin.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(bin.t_statistic)));
            } else if (d.mean != 0.0) {
                // Every pair differs by the same non-zero amount.
                bin.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), d.mean);
                bin.p_value = 0.0;
            }
        }
        bin.stars = bin.p_value < 0.001 ? "***" : bin.p_value < 0.01 ? "**" : bin.p_value < 0.05 ? "*" : "";
        out.push_back(bin);
    }
    return out;
}

std::string format_history(const TrainReport& report) {
    std::ostringstream out;
    out.precision(10);
    out << "step,epoch,beta,loss,metric\n";
    for (const auto& h : report.history) {
        out << h.step << ',' << h.epoch << ',' << h.beta << ',' << h.train_loss << ',' << h.metric << '\n';
    }
    return out.str();
}

std::string format_breakdown(const std::vector<ActivityBin>& bins) {
    std::ostringstream out;
    out.precision(10);
    out << "bin,min_activity,max_activity,n_users,mean,stderr\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto& bin = bins[b];
        out << b << ',' << bin.min_activity << ',' << bin.max_activity << ',' << bin.summary.n << ','
            << bin.summary.mean << ',' << bin.summary.std_error << '\n';
    }
    return out.str();
}

std::string format_paired_breakdown(const std::vector<PairedBin>& bins) {
    std::ostringstream out;
    out.precision(10);
    out << "bin,min_activity,max_activity,n_users,mean_a,stderr_a,mean_b,stderr_b,mean_diff,t,p,stars\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto& bin = bins[b];
        out << b << ',' << bin.min_activity << ',' << bin.max_activity << ',' << bin.first.n << ','
            << bin.first.mean << ',' << bin.first.std_error << ',' << bin.second.mean << ','
            << bin.second.std_error << ',' << bin.mean_difference << ',' << bin.t_statistic << ','
            << bin.p_value << ',' << bin.stars << '\n';
    }
    return out.str();
}

}  // namespace vaecf
