#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vaecf {

enum class LikelihoodType : std::uint8_t { kMultinomial = 0, kGaussian = 1, kLogistic = 2 };

/// Conditional likelihood of a user's click vector given decoder outputs.
/// c0 / c1 are the Gaussian confidence weights for unclicked / clicked entries.
struct Likelihood {
    LikelihoodType type = LikelihoodType::kMultinomial;
    double c0 = 1.0;
    double c1 = 2.0;

    /// Throws ConfigError for Gaussian weights that violate c1 > c0 > 0.
    void validate() const;
};

std::string to_string(LikelihoodType type);
/// Accepts "multinomial"/"mult", "gaussian"/"gauss", "logistic".
LikelihoodType parse_likelihood(const std::string& name);

/// Stable log-softmax: subtracts the max before the log-sum-exp.
void log_softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> log_softmax(std::span<const double> logits);

/// log(1 + exp(t)) without overflow.
double softplus(double t);
/// 1 / (1 + exp(-t)) without overflow.
double sigmoid(double t);

// Each *_ll returns the log-likelihood and writes its gradient with respect to
// the decoder output into `grad` (same length as x).

/// sum_i x_i log softmax(logits)_i; grad = x - N_u softmax(logits).
double multinomial_ll(std::span<const double> x, std::span<const double> logits, std::span<double> grad);

/// -sum_i (c_{x_i} / 2)(x_i - f_i)^2; grad = c_{x_i}(x_i - f_i).
double gaussian_ll(std::span<const double> x, std::span<const double> f, double c0, double c1,
                   std::span<double> grad);

/// sum_i x_i log sigmoid(f_i) + (1 - x_i) log(1 - sigmoid(f_i)), evaluated as
/// -sum_i softplus(-(2 x_i - 1) f_i); grad = x - sigmoid(f).
double logistic_ll(std::span<const double> x, std::span<const double> f, std::span<double> grad);

double log_likelihood(const Likelihood& lik, std::span<const double> x, std::span<const double> f,
                      std::span<double> grad);

}  // namespace vaecf
