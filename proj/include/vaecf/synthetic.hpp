#pragma once

#include <cstdint>

#include "vaecf/corpus.hpp"
#include "vaecf/tensor.hpp"

namespace vaecf {

/// Corpus drawn from the multinomial generative model itself:
/// z_u ~ N(0, I_K), pi_u = softmax(z_u W + b), then N_u distinct items drawn
/// from pi_u, with N_u uniform on [min_clicks, max_clicks].
struct SyntheticConfig {
    std::size_t n_users = 2000;
    std::size_t n_items = 100;
    std::size_t latent_dim = 8;
    std::size_t min_clicks = 10;
    std::size_t max_clicks = 50;
    /// Standard deviation of the decoder weights; larger is more peaked.
    double weight_scale = 1.0;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    SparseClicks clicks;
    Matrix decoder_weight;  // latent_dim x n_items
    std::vector<double> decoder_bias;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace vaecf
