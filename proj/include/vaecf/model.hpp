#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vaecf/corpus.hpp"
#include "vaecf/likelihood.hpp"
#include "vaecf/tensor.hpp"

namespace vaecf {

enum class ModelKind : std::uint8_t { kVae = 0, kDae = 1 };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Architecture of a Mult-VAE / Mult-DAE. The decoder mirrors the encoder:
/// hidden_dims {600} gives I -> 600 -> K(x2 for the VAE) and K -> 600 -> I.
struct ModelSpec {
    ModelKind kind = ModelKind::kVae;
    std::size_t n_items = 0;
    std::size_t latent_dim = 200;
    std::vector<std::size_t> hidden_dims{600};
    Likelihood likelihood;
    double input_keep_prob = 0.5;

    void validate() const;
    std::vector<std::size_t> encoder_dims() const;
    std::vector<std::size_t> decoder_dims() const;
};

/// Encoder g_phi and decoder f_theta. Doubles as the gradient container.
struct Params {
    Mlp encoder;
    Mlp decoder;

    /// Encoder buffers then decoder buffers, weight before bias within a layer.
    std::vector<std::span<double>> spans();
    std::vector<std::span<const double>> spans() const;
    std::size_t parameter_count() const { return encoder.parameter_count() + decoder.parameter_count(); }

    friend bool operator==(const Params&, const Params&) = default;
};

Params zeros_like(const Params& like);

struct Model {
    ModelSpec spec;
    Params params;
    std::vector<std::string> item_ids;
};

/// Fresh model with initialized weights (see make_mlp).
Model make_model(const ModelSpec& spec, std::uint64_t seed, std::vector<std::string> item_ids = {});

/// Bounds applied to the encoder's log-variance head.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Score assigned to excluded items. Finite so score vectors stay totally ordered.
inline constexpr double kExcludedScore = std::numeric_limits<double>::lowest();

/// Binary dense rows for the listed users of a corpus.
Matrix to_dense(const SparseClicks& clicks, std::span<const std::uint32_t> users);
/// Binary dense rows from per-user item lists.
Matrix to_dense(std::span<const std::vector<std::uint32_t>> rows, std::size_t n_items);

/// Row-wise L2 normalization; all-zero rows are left untouched.
Matrix l2_normalize_rows(const Matrix& x);

struct VariationalState {
    Matrix mu;
    Matrix logvar;
    Matrix eps;
    Matrix z;
};

struct Encoding {
    Matrix z;
    VariationalState variational;  // VAE only
    Tape tape;
    Matrix raw_output;             // encoder output before the mu / logvar split
};

/// Normalizes rows, applies input dropout (train mode), runs the encoder. For
/// the VAE, eps ~ N(0, I) is drawn from `seed` in train mode and is zero in
/// eval mode, so z = mu when evaluating.
Encoding encode(const Params& params, const ModelSpec& spec, const Matrix& x, std::uint64_t seed,
                bool train_mode);

/// Decoder output f_theta(z), un-normalized.
Matrix decode(const Params& params, const ModelSpec& spec, const Matrix& z);

struct KlResult {
    std::vector<double> per_user;
    Matrix grad_mu;
    Matrix grad_logvar;
};

/// KL(N(mu, diag exp(logvar)) || N(0, I)) per row and its gradients.
KlResult kl_diag_gaussian(const Matrix& mu, const Matrix& logvar);

struct ObjectiveOptions {
    double beta = 0.0;
    double weight_decay = 0.0;  // coupled L2: adds weight_decay / 2 * ||params||^2
    std::uint64_t seed = 0;
    bool train_mode = true;
};

struct ObjectiveResult {
    double loss = 0.0;
    double neg_log_likelihood = 0.0;  // batch mean
    double kl = 0.0;                  // batch mean, VAE only
    double weight_penalty = 0.0;
    Params grads;
};

/// Negative batch-mean beta-ELBO (VAE) or negative batch-mean log-likelihood
/// (DAE), with exact gradients for the sampled eps and dropout mask.
ObjectiveResult objective_and_grads(const Params& params, const ModelSpec& spec, const Matrix& x,
                                    const ObjectiveOptions& options);

/// Eval-mode scores for a batch of input rows.
Matrix predict_batch(const Params& params, const ModelSpec& spec, const Matrix& x);

/// Eval-mode scores for one user history. With `exclude_fold_in`, the input
/// items get kExcludedScore.
std::vector<double> predict_scores(const Model& model, std::span<const std::uint32_t> fold_in,
                                   bool exclude_fold_in);

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace vaecf
