#include "vaecf/gradcheck.hpp"

#include <algorithm>

#include "vaecf/rng.hpp"

namespace vaecf {

namespace {

std::vector<std::string> tensor_names(const Params& params) {
    std::vector<std::string> names;
    for (const auto& [prefix, mlp] : {std::pair{"encoder", &params.encoder}, std::pair{"decoder", &params.decoder}}) {
        for (std::size_t k = 0; k < mlp->layers.size(); ++k) {
            const auto base = std::string(prefix) + ".layer" + std::to_string(k);
            names.push_back(base + ".weight");
            names.push_back(base + ".bias");
        }
    }
    return names;
}

}  // namespace

std::string ModelGradCheck::label() const {
    return to_string(kind) + "/" + to_string(likelihood) + "/hidden=" + std::to_string(n_hidden);
}

ModelGradCheck check_model_gradients(ModelKind kind, LikelihoodType likelihood, std::size_t n_hidden,
                                     const GradCheckConfig& config, const GradientFn& analytic) {
    ModelSpec spec;
    spec.kind = kind;
    spec.n_items = config.n_items;
    spec.latent_dim = config.latent_dim;
    spec.hidden_dims.assign(n_hidden, config.hidden_dim);
    spec.likelihood.type = likelihood;
    spec.input_keep_prob = 0.5;

    Model model = make_model(spec, config.seed);
    // Non-zero biases so that bias gradients are exercised away from the origin.
    Rng rng(derive_seed(config.seed, 0xb1a5));
    for (Mlp* mlp : {&model.params.encoder, &model.params.decoder}) {
        for (auto& layer : mlp->layers) {
            for (double& b : layer.bias) b = 0.2 * (2.0 * rng.uniform() - 1.0);
        }
    }

    Matrix x(config.batch, config.n_items);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        x(r, rng.below(config.n_items)) = 1.0;
        for (std::size_t i = 0; i < x.cols(); ++i) {
            if (rng.uniform() < 0.3) x(r, i) = 1.0;
        }
    }

    ObjectiveOptions options;
    options.beta = kind == ModelKind::kVae ? config.beta : 0.0;
    options.weight_decay = kind == ModelKind::kDae ? config.dae_weight_decay : 0.0;
    options.seed = derive_seed(config.seed, 0x6763);
    options.train_mode = true;

    const GradientFn& fn = analytic ? analytic : GradientFn(objective_and_grads);
    const auto result = fn(model.params, spec, x, options);
    const auto names = tensor_names(model.params);

    ModelGradCheck out;
    out.kind = kind;
    out.likelihood = likelihood;
    out.n_hidden = n_hidden;

    Params probe = model.params;
    auto probe_spans = probe.spans();
    const auto grad_spans = std::as_const(result.grads).spans();
    for (std::size_t t = 0; t < probe_spans.size(); ++t) {
        const auto target = probe_spans[t];
        const auto loss = [&](std::span<const double> values) {
            std::copy(values.begin(), values.end(), target.begin());
            return objective_and_grads(probe, spec, x, options).loss;
        };
        const std::vector<double> original(target.begin(), target.end());
        const auto check = grad_check(loss, original, grad_spans[t], config.step);
        std::copy(original.begin(), original.end(), target.begin());
        out.tensors.push_back({names[t], check.max_relative_error});
        if (t == 0 || check.max_relative_error > out.max_relative_error) {
            out.max_relative_error = check.max_relative_error;
            out.worst_tensor = names[t];
        }
    }
    return out;
}

std::vector<ModelGradCheck> check_all_configurations(const GradCheckConfig& config) {
    std::vector<ModelGradCheck> out;
    for (auto kind : {ModelKind::kVae, ModelKind::kDae}) {
        for (auto lik : {LikelihoodType::kMultinomial, LikelihoodType::kGaussian, LikelihoodType::kLogistic}) {
            for (std::size_t hidden = 0; hidden <= 2; ++hidden) {
                out.push_back(check_model_gradients(kind, lik, hidden, config));
            }
        }
    }
    return out;
}

}  // namespace vaecf
