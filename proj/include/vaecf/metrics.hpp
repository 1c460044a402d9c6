#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vaecf/corpus.hpp"
#include "vaecf/tensor.hpp"

namespace vaecf {

struct Model;

/// Item indices, best first. Equal scores are ordered by ascending item index.
struct RankedList {
    std::vector<std::uint32_t> order;
};

/// Full ranking of the candidate items. `candidates`, when non-empty, has one
/// entry per item and excludes items whose entry is zero.
RankedList rank(std::span<const double> scores, std::span<const std::uint8_t> candidates = {});

/// The first `r` entries of rank(scores, candidates), via partial sort.
RankedList top_r(std::span<const double> scores, std::size_t r,
                 std::span<const std::uint8_t> candidates = {});

/// Hits in the top R divided by min(R, |held_out|). `held_out` must be sorted.
double recall_at_r(const RankedList& ranked, std::span<const std::uint32_t> held_out, std::size_t r);

/// DCG@R over the ideal DCG@R with min(R, |held_out|) hits at the top ranks.
/// The log base cancels; it is a parameter only so that this can be checked.
double ndcg_at_r(const RankedList& ranked, std::span<const std::uint32_t> held_out, std::size_t r,
                 double log_base = 2.0);

enum class MetricKind { kRecall, kNdcg };

struct MetricSpec {
    MetricKind kind = MetricKind::kNdcg;
    std::size_t cutoff = 100;

    std::string name() const;
    friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

/// "ndcg@100" -> {kNdcg, 100}. Throws ConfigError for anything else.
MetricSpec parse_metric(const std::string& text);
/// Comma-separated list of metric names.
std::vector<MetricSpec> parse_metric_list(const std::string& text);

double compute_metric(const MetricSpec& metric, const RankedList& ranked,
                      std::span<const std::uint32_t> held_out);

struct Summary {
    double mean = 0.0;
    double std_error = 0.0;  // sample standard deviation / sqrt(n)
    std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

/// Scores a batch of dense fold-in rows. Must be safe to call concurrently.
using BatchScorer = std::function<Matrix(const Matrix& fold_in_rows)>;

struct EvalOptions {
    std::vector<MetricSpec> metrics{{MetricKind::kNdcg, 100}};
    std::size_t batch_size = 500;
    std::size_t threads = 1;
};

struct EvalResult {
    std::vector<MetricSpec> metrics;
    /// Index into the EvalSplit for each evaluated user.
    std::vector<std::uint32_t> users;
    std::vector<std::size_t> fold_in_sizes;
    /// per_user[m][k]: metric m for users[k].
    std::vector<std::vector<double>> per_user;
    std::vector<Summary> summary;
    std::size_t dropped_users = 0;
};

/// Scores every fold-in row, excludes the fold-in items from the ranking and
/// computes each metric against the held-out items. Users without held-out
/// items are dropped and counted. Results do not depend on `threads`.
EvalResult evaluate_scorer(const BatchScorer& scorer, std::size_t n_items, const EvalSplit& split,
                           const EvalOptions& options);

EvalResult evaluate_model(const Model& model, const EvalSplit& split, const EvalOptions& options);

/// CSV: metric,mean,stderr,n_users
std::string format_eval_report(const EvalResult& result);
/// CSV: user_id,fold_in_size,<metric names...>
std::string format_per_user(const EvalResult& result, const SparseClicks& heldout, const EvalSplit& split);

}  // namespace vaecf
