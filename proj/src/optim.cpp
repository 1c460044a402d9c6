#include "vaecf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaecf/error.hpp"

namespace vaecf {

void AdamConfig::validate() const {
    if (!(lr >= 0.0)) throw ConfigError("adam lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
    if (!(decoupled_weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size()) {
            throw ShapeError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
        }
        for (double g : grads[t]) {
            if (!std::isfinite(g)) {
                throw NumericError("adam_step: non-finite gradient in tensor " + std::to_string(t));
            }
        }
    }
    if (state.step_count == 0 && state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state layout mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (state.m[t].size() != params[t].size()) throw ShapeError("adam_step: state layout mismatch");
    }

    const auto& cfg = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        const auto g = grads[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
            if (cfg.decoupled_weight_decay > 0.0) p[j] -= cfg.lr * cfg.decoupled_weight_decay * p[j];
        }
    }
}

void AnnealSchedule::validate() const {
    if (!(beta_cap >= 0.0)) throw ConfigError("beta cap must be >= 0");
}

double beta_at(const AnnealSchedule& schedule, std::uint64_t step) {
    if (schedule.total_anneal_steps == 0) return schedule.beta_cap;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(schedule.total_anneal_steps));
    return schedule.beta_cap * frac;
}

double capture_best_beta(const AnnealSchedule& schedule, std::span<const ValidationPoint> history) {
    if (history.empty()) throw ConfigError("capture_best_beta: empty validation history");
    const ValidationPoint* best = &history.front();
    for (const auto& point : history) {
        if (point.metric > best->metric || (point.metric == best->metric && point.step < best->step)) {
            best = &point;
        }
    }
    return beta_at(schedule, best->step);
}

}  // namespace vaecf
