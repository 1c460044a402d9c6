#include "vaecf/model.hpp"

#include <algorithm>
#include <cmath>

#include "vaecf/error.hpp"
#include "vaecf/io.hpp"
#include "vaecf/rng.hpp"

namespace vaecf {

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'V', 'A', 'E'};
constexpr std::uint32_t kCheckpointVersion = 1;

constexpr std::uint64_t kStreamInit = 0x494e;
constexpr std::uint64_t kStreamDropout = 0x4452;
constexpr std::uint64_t kStreamEps = 0x4550;

std::vector<Activation> hidden_tanh_activations(std::size_t n_layers) {
    std::vector<Activation> acts(n_layers, Activation::kTanh);
    acts.back() = Activation::kIdentity;
    return acts;
}

void require_finite(double value, const char* term) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + term + " term in objective");
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::kVae ? "vae" : "dae"; }

ModelKind parse_model_kind(const std::string& name) {
    if (name == "vae") return ModelKind::kVae;
    if (name == "dae") return ModelKind::kDae;
    throw ConfigError("unknown model kind '" + name + "' (expected vae or dae)");
}

void ModelSpec::validate() const {
    if (n_items == 0) throw ConfigError("model needs at least one item");
    if (latent_dim == 0) throw ConfigError("latent dimension must be >= 1");
    if (hidden_dims.size() > 2) throw ConfigError("at most two hidden layers are supported");
    for (auto h : hidden_dims) {
        if (h == 0) throw ConfigError("hidden layer dimension must be >= 1");
    }
    if (!(input_keep_prob > 0.0 && input_keep_prob <= 1.0)) {
        throw ConfigError("input keep probability must lie in (0, 1]");
    }
    likelihood.validate();
}

std::vector<std::size_t> ModelSpec::encoder_dims() const {
    std::vector<std::size_t> dims{n_items};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(kind == ModelKind::kVae ? 2 * latent_dim : latent_dim);
    return dims;
}

std::vector<std::size_t> ModelSpec::decoder_dims() const {
    std::vector<std::size_t> dims{latent_dim};
    dims.insert(dims.end(), hidden_dims.rbegin(), hidden_dims.rend());
    dims.push_back(n_items);
    return dims;
}

std::vector<std::span<double>> Params::spans() {
    auto out = parameter_spans(encoder);
    auto dec = parameter_spans(decoder);
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

std::vector<std::span<const double>> Params::spans() const {
    auto out = parameter_spans(encoder);
    auto dec = parameter_spans(decoder);
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

Params zeros_like(const Params& like) { return {zeros_like(like.encoder), zeros_like(like.decoder)}; }

Model make_model(const ModelSpec& spec, std::uint64_t seed, std::vector<std::string> item_ids) {
    spec.validate();
    if (!item_ids.empty() && item_ids.size() != spec.n_items) {
        throw ConfigError("item id table size does not match n_items");
    }
    Rng rng(derive_seed(seed, kStreamInit));
    const auto enc = spec.encoder_dims();
    const auto dec = spec.decoder_dims();
    Model model;
    model.spec = spec;
    model.params.encoder = make_mlp(enc, hidden_tanh_activations(enc.size() - 1), rng);
    model.params.decoder = make_mlp(dec, hidden_tanh_activations(dec.size() - 1), rng);
    model.item_ids = std::move(item_ids);
    return model;
}

Matrix to_dense(const SparseClicks& clicks, std::span<const std::uint32_t> users) {
    Matrix x(users.size(), clicks.n_items());
    for (std::size_t r = 0; r < users.size(); ++r) {
        for (auto i : clicks.row(users[r])) x(r, i) = 1.0;
    }
    return x;
}

Matrix to_dense(std::span<const std::vector<std::uint32_t>> rows, std::size_t n_items) {
    Matrix x(rows.size(), n_items);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (auto i : rows[r]) {
            if (i >= n_items) throw ShapeError("item index out of range in dense conversion");
            x(r, i) = 1.0;
        }
    }
    return x;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : row) v *= inv;
    }
    return out;
}

Encoding encode(const Params& params, const ModelSpec& spec, const Matrix& x, std::uint64_t seed,
                bool train_mode) {
    if (x.cols() != spec.n_items) {
        throw ShapeError("encode: input has " + std::to_string(x.cols()) + " columns, model has " +
                         std::to_string(spec.n_items) + " items");
    }
    const Matrix input = input_dropout(l2_normalize_rows(x), spec.input_keep_prob,
                                       derive_seed(seed, kStreamDropout), train_mode);
    auto fwd = forward_mlp(params.encoder, input);

    Encoding enc;
    enc.tape = std::move(fwd.tape);
    if (spec.kind == ModelKind::kDae) {
        enc.z = fwd.output;
        enc.raw_output = std::move(fwd.output);
        return enc;
    }

    const std::size_t batch = x.rows();
    const std::size_t k = spec.latent_dim;
    auto& vs = enc.variational;
    vs.mu = Matrix(batch, k);
    vs.logvar = Matrix(batch, k);
    vs.eps = Matrix(batch, k);
    vs.z = Matrix(batch, k);
    Rng rng(derive_seed(seed, kStreamEps));
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
            vs.mu(r, c) = fwd.output(r, c);
            vs.logvar(r, c) = std::clamp(fwd.output(r, k + c), kLogVarMin, kLogVarMax);
            vs.eps(r, c) = train_mode ? rng.normal() : 0.0;
            vs.z(r, c) = vs.mu(r, c) + vs.eps(r, c) * std::exp(0.5 * vs.logvar(r, c));
        }
    }
    enc.z = vs.z;
    enc.raw_output = std::move(fwd.output);
    return enc;
}

Matrix decode(const Params& params, const ModelSpec& spec, const Matrix& z) {
    if (z.cols() != spec.latent_dim) {
        throw ShapeError("decode: z has " + std::to_string(z.cols()) + " columns, latent dim is " +
                         std::to_string(spec.latent_dim));
    }
    return forward_mlp(params.decoder, z).output;
}

KlResult kl_diag_gaussian(const Matrix& mu, const Matrix& logvar) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
        throw ShapeError("kl_diag_gaussian: mu " + shape_string(mu) + " vs logvar " + shape_string(logvar));
    }
    KlResult out;
    out.per_user.assign(mu.rows(), 0.0);
    out.grad_mu = mu;
    out.grad_logvar = Matrix(mu.rows(), mu.cols());
    for (std::size_t r = 0; r < mu.rows(); ++r) {
        double kl = 0.0;
        for (std::size_t c = 0; c < mu.cols(); ++c) {
            const double var = std::exp(logvar(r, c));
            kl += var + mu(r, c) * mu(r, c) - 1.0 - logvar(r, c);
            out.grad_logvar(r, c) = 0.5 * (var - 1.0);
        }
        out.per_user[r] = 0.5 * kl;
    }
    return out;
}

ObjectiveResult objective_and_grads(const Params& params, const ModelSpec& spec, const Matrix& x,
                                    const ObjectiveOptions& options) {
    if (!(options.beta >= 0.0)) throw ConfigError("beta must be >= 0");
    const std::size_t batch = x.rows();
    if (batch == 0) throw ShapeError("objective_and_grads: empty batch");
    const double inv_batch = 1.0 / static_cast<double>(batch);

    auto enc = encode(params, spec, x, options.seed, options.train_mode);
    auto dec = forward_mlp(params.decoder, enc.z);

    ObjectiveResult result;
    Matrix grad_logits(batch, spec.n_items);
    double total_ll = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        auto g = grad_logits.row(r);
        total_ll += log_likelihood(spec.likelihood, x.row(r), dec.output.row(r), g);
        for (double& v : g) v *= -inv_batch;
    }
    result.neg_log_likelihood = -total_ll * inv_batch;
    require_finite(result.neg_log_likelihood, "reconstruction");

    auto dec_back = backward_mlp(params.decoder, dec.tape, grad_logits);
    result.grads.decoder = std::move(dec_back.grads);
    const Matrix& grad_z = dec_back.grad_input;

    Matrix grad_raw;
    if (spec.kind == ModelKind::kVae) {
        const auto& vs = enc.variational;
        const auto kl = kl_diag_gaussian(vs.mu, vs.logvar);
        double total_kl = 0.0;
        for (double v : kl.per_user) total_kl += v;
        result.kl = total_kl * inv_batch;
        require_finite(result.kl, "KL");

        const std::size_t k = spec.latent_dim;
        const double kl_scale = options.beta * inv_batch;
        grad_raw = Matrix(batch, 2 * k);
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                grad_raw(r, c) = grad_z(r, c) + kl_scale * kl.grad_mu(r, c);
                const double raw = enc.raw_output(r, k + c);
                if (raw < kLogVarMin || raw > kLogVarMax) continue;  // clamped: zero gradient
                const double sigma = std::exp(0.5 * vs.logvar(r, c));
                grad_raw(r, k + c) = grad_z(r, c) * vs.eps(r, c) * 0.5 * sigma +
                                     kl_scale * kl.grad_logvar(r, c);
            }
        }
    } else {
        grad_raw = grad_z;
    }
    result.grads.encoder = backward_mlp(params.encoder, enc.tape, grad_raw).grads;

    if (options.weight_decay > 0.0) {
        double sq = 0.0;
        auto grads = result.grads.spans();
        const auto values = params.spans();
        for (std::size_t t = 0; t < values.size(); ++t) {
            for (std::size_t j = 0; j < values[t].size(); ++j) {
                sq += values[t][j] * values[t][j];
                grads[t][j] += options.weight_decay * values[t][j];
            }
        }
        result.weight_penalty = 0.5 * options.weight_decay * sq;
        require_finite(result.weight_penalty, "weight decay");
    }
    result.loss = result.neg_log_likelihood + options.beta * result.kl + result.weight_penalty;
    return result;
}

Matrix predict_batch(const Params& params, const ModelSpec& spec, const Matrix& x) {
    const auto enc = encode(params, spec, x, 0, /*train_mode=*/false);
    return decode(params, spec, enc.z);
}

std::vector<double> predict_scores(const Model& model, std::span<const std::uint32_t> fold_in,
                                   bool exclude_fold_in) {
    const std::vector<std::vector<std::uint32_t>> rows{{fold_in.begin(), fold_in.end()}};
    const Matrix scores = predict_batch(model.params, model.spec, to_dense(rows, model.spec.n_items));
    std::vector<double> out(scores.data().begin(), scores.data().end());
    if (exclude_fold_in) {
        for (auto i : fold_in) out[i] = kExcludedScore;
    }
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
    const auto& spec = model.spec;
    io::ByteWriter w;
    w.put_raw(std::string_view(kCheckpointMagic, 4));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.kind));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.likelihood.type));
    w.put<std::uint64_t>(spec.n_items);
    w.put<std::uint64_t>(spec.latent_dim);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.hidden_dims.size()));
    for (auto h : spec.hidden_dims) w.put<std::uint64_t>(h);
    w.put<double>(spec.likelihood.c0);
    w.put<double>(spec.likelihood.c1);
    for (const Mlp* mlp : {&model.params.encoder, &model.params.decoder}) {
        for (const auto& layer : mlp->layers) {
            w.put<std::uint64_t>(layer.weight.rows());
            w.put<std::uint64_t>(layer.weight.cols());
            w.put_array(layer.weight.data());
            w.put<std::uint64_t>(1);
            w.put<std::uint64_t>(layer.bias.size());
            w.put_array(std::span<const double>(layer.bias));
        }
    }
    w.put_string_table(model.item_ids);
    const auto crc = io::crc32(w.bytes());
    w.put<std::uint32_t>(crc);
    return std::move(w.bytes());
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
    if (bytes.size() < 8) throw CorruptCheckpointError(source + ": file too short");
    io::ByteReader trailer(bytes.subspan(bytes.size() - 4), source);
    const auto stored_crc = trailer.get<std::uint32_t>();
    const auto body = bytes.first(bytes.size() - 4);
    if (io::crc32(body) != stored_crc) throw CorruptCheckpointError(source + ": CRC mismatch");

    io::ByteReader r(body, source);
    if (r.get_raw(4) != std::string_view(kCheckpointMagic, 4)) {
        throw CorruptCheckpointError(source + ": bad magic, not a checkpoint");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

    Model model;
    auto& spec = model.spec;
    const auto kind = r.get<std::uint8_t>();
    const auto lik = r.get<std::uint8_t>();
    if (kind > 1) r.fail("bad model kind");
    if (lik > 2) r.fail("bad likelihood");
    spec.kind = static_cast<ModelKind>(kind);
    spec.likelihood.type = static_cast<LikelihoodType>(lik);
    spec.n_items = r.get<std::uint64_t>();
    spec.latent_dim = r.get<std::uint64_t>();
    const auto n_hidden = r.get<std::uint8_t>();
    spec.hidden_dims.clear();
    for (unsigned h = 0; h < n_hidden; ++h) spec.hidden_dims.push_back(r.get<std::uint64_t>());
    spec.likelihood.c0 = r.get<double>();
    spec.likelihood.c1 = r.get<double>();
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        r.fail(std::string("invalid model header: ") + e.what());
    }

    // Shapes come from the header; each stored tensor must match them.
    Rng unused(0);
    const auto enc_dims = spec.encoder_dims();
    const auto dec_dims = spec.decoder_dims();
    model.params.encoder = make_mlp(enc_dims, hidden_tanh_activations(enc_dims.size() - 1), unused);
    model.params.decoder = make_mlp(dec_dims, hidden_tanh_activations(dec_dims.size() - 1), unused);
    for (Mlp* mlp : {&model.params.encoder, &model.params.decoder}) {
        for (auto& layer : mlp->layers) {
            for (int part = 0; part < 2; ++part) {
                const auto rows = r.get<std::uint64_t>();
                const auto cols = r.get<std::uint64_t>();
                const std::size_t want_rows = part == 0 ? layer.fan_in() : 1;
                const std::size_t want_cols = layer.fan_out();
                if (rows != want_rows || cols != want_cols) r.fail("tensor shape does not match header");
                auto data = r.get_array<double>(rows * cols);
                if (part == 0) {
                    layer.weight = Matrix(rows, cols, std::move(data));
                } else {
                    layer.bias = std::move(data);
                }
            }
        }
    }
    model.item_ids = r.get_string_table();
    if (!model.item_ids.empty() && model.item_ids.size() != spec.n_items) {
        r.fail("item id table size does not match n_items");
    }
    if (r.remaining() != 0) r.fail("trailing bytes before CRC");
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    io::write_file_atomic(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace vaecf
