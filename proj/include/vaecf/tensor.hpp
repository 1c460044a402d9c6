#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vaecf {

class Rng;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

/// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// transpose(A) * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// A * transpose(B)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

enum class Activation : std::uint8_t { kIdentity = 0, kTanh = 1 };

struct DenseLayer {
    Matrix weight;               // fan_in x fan_out
    std::vector<double> bias;    // fan_out
    Activation activation = Activation::kIdentity;

    std::size_t fan_in() const { return weight.rows(); }
    std::size_t fan_out() const { return weight.cols(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Ordered stack of dense layers. Also used as the gradient container, with the
/// same shapes as the parameters it mirrors.
struct Mlp {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().fan_in(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().fan_out(); }
    std::size_t parameter_count() const;

    /// Throws ShapeError unless consecutive layers chain and biases match.
    void validate() const;

    friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Layer dims {d0, d1, ..., dn} produce n layers; `activations` has n entries.
/// Weights are uniform on +-sqrt(6 / (fan_in + fan_out)), biases zero.
Mlp make_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng& rng);

/// Same shapes and activations as `like`, all parameters zero.
Mlp zeros_like(const Mlp& like);

/// Every weight and bias buffer in layer order (weight before bias).
std::vector<std::span<double>> parameter_spans(Mlp& mlp);
std::vector<std::span<const double>> parameter_spans(const Mlp& mlp);

/// Cached per-layer inputs and outputs from forward_mlp.
struct Tape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
};

struct ForwardResult {
    Matrix output;
    Tape tape;
};

ForwardResult forward_mlp(const Mlp& params, const Matrix& input);

struct BackwardResult {
    Mlp grads;
    Matrix grad_input;
};

BackwardResult backward_mlp(const Mlp& params, const Tape& tape, const Matrix& grad_output);

/// Inverted dropout. In train mode each entry is zeroed with probability
/// 1 - keep_prob and survivors are scaled by 1 / keep_prob; eval mode is the identity.
Matrix input_dropout(const Matrix& input, double keep_prob, std::uint64_t seed, bool train_mode);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central-difference check of `analytic` against loss(params). The relative
/// error for each coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic,
                           double step = 1e-5);

}  // namespace vaecf
