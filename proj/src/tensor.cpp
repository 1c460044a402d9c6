#include "vaecf/tensor.hpp"

#include <Eigen/Core>

#include <cmath>

#include "vaecf/error.hpp"
#include "vaecf/rng.hpp"

namespace vaecf {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
    return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
    return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_fail("matmul", a, b);
    Matrix c(a.rows(), b.cols());
    if (a.cols() > 0) view(c).noalias() = view(a) * view(b);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    if (a.rows() > 0) view(c).noalias() = view(a).transpose() * view(b);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    if (a.cols() > 0) view(c).noalias() = view(a) * view(b).transpose();
    return c;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void Mlp::validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.bias.size() != l.fan_out()) {
            throw ShapeError("layer " + std::to_string(k) + ": bias length " +
                             std::to_string(l.bias.size()) + " != fan_out " + std::to_string(l.fan_out()));
        }
        if (k > 0 && layers[k - 1].fan_out() != l.fan_in()) {
            throw ShapeError("layer " + std::to_string(k) + ": fan_in " + std::to_string(l.fan_in()) +
                             " does not chain with previous fan_out " +
                             std::to_string(layers[k - 1].fan_out()));
        }
    }
}

Mlp make_mlp(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng& rng) {
    if (dims.size() < 2 || activations.size() != dims.size() - 1) {
        throw ShapeError("make_mlp: need n+1 dims for n activations");
    }
    Mlp mlp;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        DenseLayer layer;
        layer.weight = Matrix(dims[k], dims[k + 1]);
        layer.bias.assign(dims[k + 1], 0.0);
        layer.activation = activations[k];
        const double limit = std::sqrt(6.0 / static_cast<double>(dims[k] + dims[k + 1]));
        for (auto& w : layer.weight.data()) w = limit * (2.0 * rng.uniform() - 1.0);
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

Mlp zeros_like(const Mlp& like) {
    Mlp out;
    out.layers.reserve(like.layers.size());
    for (const auto& l : like.layers) {
        out.layers.push_back({Matrix(l.fan_in(), l.fan_out()), std::vector<double>(l.fan_out(), 0.0),
                              l.activation});
    }
    return out;
}

std::vector<std::span<double>> parameter_spans(Mlp& mlp) {
    std::vector<std::span<double>> spans;
    for (auto& l : mlp.layers) {
        spans.push_back(l.weight.data());
        spans.push_back(l.bias);
    }
    return spans;
}

std::vector<std::span<const double>> parameter_spans(const Mlp& mlp) {
    std::vector<std::span<const double>> spans;
    for (const auto& l : mlp.layers) {
        spans.push_back(l.weight.data());
        spans.push_back(l.bias);
    }
    return spans;
}

ForwardResult forward_mlp(const Mlp& params, const Matrix& input) {
    params.validate();
    if (!params.layers.empty() && input.cols() != params.input_dim()) {
        throw ShapeError("forward_mlp: input has " + std::to_string(input.cols()) +
                         " columns, first layer expects " + std::to_string(params.input_dim()));
    }
    ForwardResult result;
    Matrix current = input;
    for (const auto& layer : params.layers) {
        Matrix out = matmul(current, layer.weight);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] += layer.bias[c];
                if (layer.activation == Activation::kTanh) row[c] = std::tanh(row[c]);
            }
        }
        result.tape.inputs.push_back(std::move(current));
        result.tape.outputs.push_back(out);
        current = std::move(out);
    }
    result.output = std::move(current);
    return result;
}

BackwardResult backward_mlp(const Mlp& params, const Tape& tape, const Matrix& grad_output) {
    if (tape.inputs.size() != params.layers.size() || tape.outputs.size() != params.layers.size()) {
        throw ShapeError("backward_mlp: tape does not match parameters");
    }
    BackwardResult result;
    result.grads = zeros_like(params);
    Matrix grad = grad_output;
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        const auto& layer = params.layers[k];
        const auto& out = tape.outputs[k];
        if (grad.rows() != out.rows() || grad.cols() != out.cols()) {
            throw ShapeError("backward_mlp: gradient " + shape_string(grad) + " vs layer output " +
                             shape_string(out));
        }
        // Through the activation: d tanh(a) / da = 1 - tanh(a)^2.
        if (layer.activation == Activation::kTanh) {
            auto g = grad.data();
            auto y = out.data();
            for (std::size_t j = 0; j < g.size(); ++j) g[j] *= 1.0 - y[j] * y[j];
        }
        auto& lg = result.grads.layers[k];
        lg.weight = matmul_tn(tape.inputs[k], grad);
        for (std::size_t r = 0; r < grad.rows(); ++r) {
            const auto row = grad.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) lg.bias[c] += row[c];
        }
        grad = matmul_nt(grad, layer.weight);
    }
    result.grad_input = std::move(grad);
    return result;
}

Matrix input_dropout(const Matrix& input, double keep_prob, std::uint64_t seed, bool train_mode) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must lie in (0, 1]");
    if (!train_mode || keep_prob == 1.0) return input;
    Matrix out = input;
    Rng rng(seed);
    const double scale = 1.0 / keep_prob;
    for (auto& x : out.data()) x = rng.uniform() < keep_prob ? x * scale : 0.0;
    return out;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic,
                           double step) {
    if (params.size() != analytic.size()) throw ShapeError("grad_check: gradient length mismatch");
    std::vector<double> p(params.begin(), params.end());
    GradCheckResult result;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double saved = p[j];
        p[j] = saved + step;
        const double up = loss(p);
        p[j] = saved - step;
        const double down = loss(p);
        p[j] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("grad_check: non-finite loss at coordinate " + std::to_string(j));
        }
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic[j] - numeric) / denom;
        if (j == 0 || err > result.max_relative_error) result = {err, j, analytic[j], numeric};
    }
    return result;
}

}  // namespace vaecf
