#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaecf/corpus.hpp"
#include "vaecf/metrics.hpp"
#include "vaecf/model.hpp"
#include "vaecf/optim.hpp"

namespace vaecf {

struct StepInfo {
    std::size_t epoch = 0;
    std::uint64_t step = 0;  // index of this update, from 0
    double beta = 0.0;
    double loss = 0.0;
    std::span<const std::uint32_t> batch_users;
};

struct TrainConfig {
    std::size_t batch_size = 500;
    std::size_t epochs = 200;
    /// Validate every this many updates; 0 means once per epoch.
    std::size_t eval_every = 0;
    std::uint64_t seed = 0;
    AnnealSchedule anneal;
    /// Budget mode: once validation fails to improve this many times in a row,
    /// beta stops rising and stays at the value of the best step. 0 disables.
    std::size_t anneal_patience = 0;
    AdamConfig adam;
    /// Coupled L2 strength added to the objective.
    double weight_decay = 0.0;
    MetricSpec validation_metric{MetricKind::kNdcg, 100};
    std::size_t eval_batch_size = 500;
    std::size_t eval_threads = 1;
    /// Best-so-far model is written here (atomically) whenever validation improves.
    std::optional<std::filesystem::path> checkpoint_path;
    /// Called after every update.
    std::function<void(const StepInfo&)> on_step;

    void validate() const;
};

struct HistoryEntry {
    std::size_t epoch = 0;
    std::uint64_t step = 0;  // updates completed
    double beta = 0.0;       // schedule value at `step`
    double train_loss = 0.0; // mean batch loss since the previous entry
    double metric = 0.0;
};

struct TrainReport {
    std::vector<HistoryEntry> history;
    std::optional<std::filesystem::path> best_checkpoint;
    double best_metric = 0.0;
    std::uint64_t best_step = 0;
    /// beta at the best validation step.
    double beta_best = 0.0;
};

struct TrainResult {
    Model best_model;
    TrainReport report;
};

/// Mini-batch training over shuffled users with annealed beta and Adam.
/// `validation_split` indexes rows of `validation`. Throws NumericError on a
/// non-finite loss or gradient; a loadable checkpoint is left behind when a
/// checkpoint path is configured.
TrainResult train(const SparseClicks& train_clicks, const SparseClicks& validation,
                  const EvalSplit& validation_split, const ModelSpec& spec, const TrainConfig& config);

struct TwoPhaseResult {
    TrainReport search;  // anneal to beta = 1 while recording validation
    TrainResult final;   // retrain with the schedule capped at the best beta
};

/// Anneal all the way to 1, take the beta at the validation peak, then retrain
/// from scratch with the same slope capped at that beta.
TwoPhaseResult train_two_phase(const SparseClicks& train_clicks, const SparseClicks& validation,
                               const EvalSplit& validation_split, const ModelSpec& spec,
                               const TrainConfig& config);

/// Per-item count of training users; the same ranking is served to everyone.
std::vector<double> popularity_baseline(const SparseClicks& train_clicks);
BatchScorer popularity_scorer(std::vector<double> scores);

struct ActivityBin {
    std::size_t min_activity = 0;
    std::size_t max_activity = 0;
    Summary summary;
};

/// Users sorted by fold-in size (ties by position) and cut into n_bins
/// equal-count bins, the remainder going to the earliest bins.
std::vector<ActivityBin> activity_breakdown(std::span<const double> values,
                                            std::span<const std::size_t> fold_in_sizes, std::size_t n_bins);

struct PairedBin {
    std::size_t min_activity = 0;
    std::size_t max_activity = 0;
    Summary first;
    Summary second;
    double mean_difference = 0.0;  // first - second
    double t_statistic = 0.0;
    double p_value = 1.0;          // two-sided paired t-test
    std::string stars;             // "*", "**", "***" at 0.05 / 0.01 / 0.001
};

std::vector<PairedBin> paired_activity_breakdown(std::span<const double> first, std::span<const double> second,
                                                 std::span<const std::size_t> fold_in_sizes,
                                                 std::size_t n_bins);

/// CSV: step,epoch,beta,loss,metric
std::string format_history(const TrainReport& report);
/// CSV: bin,min_activity,max_activity,n_users,mean,stderr
std::string format_breakdown(const std::vector<ActivityBin>& bins);
std::string format_paired_breakdown(const std::vector<PairedBin>& bins);

}  // namespace vaecf
