#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vaecf/model.hpp"

namespace vaecf {

/// Tiny random instance used to check objective gradients by finite differences.
struct GradCheckConfig {
    std::size_t n_items = 20;
    std::size_t latent_dim = 4;
    std::size_t hidden_dim = 8;
    std::size_t batch = 6;
    double step = 1e-5;
    double beta = 0.7;
    /// Applied to DAE runs so the decay term is covered too.
    double dae_weight_decay = 0.01;
    std::uint64_t seed = 7;
};

struct TensorCheck {
    std::string name;  // e.g. "decoder.layer1.weight"
    double max_relative_error = 0.0;
};

struct ModelGradCheck {
    ModelKind kind = ModelKind::kVae;
    LikelihoodType likelihood = LikelihoodType::kMultinomial;
    std::size_t n_hidden = 0;
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::vector<TensorCheck> tensors;

    std::string label() const;
};

using GradientFn = std::function<ObjectiveResult(const Params&, const ModelSpec&, const Matrix&,
                                                 const ObjectiveOptions&)>;

/// Compares `analytic` (objective_and_grads by default) against central
/// differences of the objective's loss, tensor by tensor. Dropout masks and eps
/// are fixed by the seed, so the loss is a deterministic function of the parameters.
ModelGradCheck check_model_gradients(ModelKind kind, LikelihoodType likelihood, std::size_t n_hidden,
                                     const GradCheckConfig& config, const GradientFn& analytic = {});

/// {vae, dae} x {multinomial, gaussian, logistic} x {0, 1, 2 hidden layers}.
std::vector<ModelGradCheck> check_all_configurations(const GradCheckConfig& config);

}  // namespace vaecf
