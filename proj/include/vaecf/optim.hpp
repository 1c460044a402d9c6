#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vaecf {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// AdamW-style decay applied directly to the parameters. Off by default;
    /// the usual route is the coupled L2 term in the objective.
    double decoupled_weight_decay = 0.0;

    void validate() const;
};

/// Bias-corrected Adam moments. The moment buffers are shaped on the first step
/// and must match the parameter layout on every later one.
struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamState(AdamConfig cfg = {}) : config(cfg) { config.validate(); }
};

/// One Adam update in place. Throws NumericError (leaving params and state
/// untouched) when any gradient entry is non-finite.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);

/// Linear KL annealing: beta(step) = beta_cap * min(1, step / total_anneal_steps).
/// With total_anneal_steps == 0 the schedule sits at beta_cap from step 0.
struct AnnealSchedule {
    std::uint64_t total_anneal_steps = 200000;
    double beta_cap = 1.0;

    void validate() const;
};

double beta_at(const AnnealSchedule& schedule, std::uint64_t step);

struct ValidationPoint {
    std::uint64_t step = 0;
    double metric = 0.0;
};

/// beta at the step with the highest validation metric; ties go to the earliest step.
double capture_best_beta(const AnnealSchedule& schedule, std::span<const ValidationPoint> history);

}  // namespace vaecf
