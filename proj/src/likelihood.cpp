#include "vaecf/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include "vaecf/error.hpp"

namespace vaecf {

namespace {

void check_lengths(const char* op, std::size_t a, std::size_t b, std::size_t g) {
    if (a != b || a != g) throw ShapeError(std::string(op) + ": length mismatch");
}

}  // namespace

void Likelihood::validate() const {
    if (type == LikelihoodType::kGaussian && !(c1 > c0 && c0 > 0.0)) {
        throw ConfigError("gaussian likelihood requires c1 > c0 > 0");
    }
}

std::string to_string(LikelihoodType type) {
    switch (type) {
        case LikelihoodType::kMultinomial: return "multinomial";
        case LikelihoodType::kGaussian: return "gaussian";
        case LikelihoodType::kLogistic: return "logistic";
    }
    return "unknown";
}

LikelihoodType parse_likelihood(const std::string& name) {
    if (name == "multinomial" || name == "mult") return LikelihoodType::kMultinomial;
    if (name == "gaussian" || name == "gauss") return LikelihoodType::kGaussian;
    if (name == "logistic") return LikelihoodType::kLogistic;
    throw ConfigError("unknown likelihood '" + name + "'");
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
    if (logits.size() != out.size()) throw ShapeError("log_softmax: length mismatch");
    if (logits.empty()) return;
    const double max = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - max);
    const double log_norm = max + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
}

std::vector<double> log_softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    log_softmax(logits, out);
    return out;
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double multinomial_ll(std::span<const double> x, std::span<const double> logits, std::span<double> grad) {
    check_lengths("multinomial_ll", x.size(), logits.size(), grad.size());
    log_softmax(logits, grad);
    double ll = 0.0;
    double n_clicks = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) ll += x[i] * grad[i];
        n_clicks += x[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = x[i] - n_clicks * std::exp(grad[i]);
    return ll;
}

double gaussian_ll(std::span<const double> x, std::span<const double> f, double c0, double c1,
                   std::span<double> grad) {
    check_lengths("gaussian_ll", x.size(), f.size(), grad.size());
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = x[i] != 0.0 ? c1 : c0;
        const double r = x[i] - f[i];
        ll -= 0.5 * c * r * r;
        grad[i] = c * r;
    }
    return ll;
}

double logistic_ll(std::span<const double> x, std::span<const double> f, std::span<double> grad) {
    check_lengths("logistic_ll", x.size(), f.size(), grad.size());
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double sign = 2.0 * x[i] - 1.0;
        ll -= softplus(-sign * f[i]);
        grad[i] = x[i] - sigmoid(f[i]);
    }
    return ll;
}

double log_likelihood(const Likelihood& lik, std::span<const double> x, std::span<const double> f,
                      std::span<double> grad) {
    switch (lik.type) {
        case LikelihoodType::kMultinomial: return multinomial_ll(x, f, grad);
        case LikelihoodType::kGaussian: return gaussian_ll(x, f, lik.c0, lik.c1, grad);
        case LikelihoodType::kLogistic: return logistic_ll(x, f, grad);
    }
    throw ConfigError("unknown likelihood");
}

}  // namespace vaecf
