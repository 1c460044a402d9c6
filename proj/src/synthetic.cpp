#include "vaecf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "vaecf/error.hpp"
#include "vaecf/likelihood.hpp"
#include "vaecf/rng.hpp"

namespace vaecf {

SyntheticCorpus generate_synthetic(const SyntheticConfig& config) {
    if (config.n_users == 0 || config.n_items == 0 || config.latent_dim == 0) {
        throw ConfigError("synthetic corpus dimensions must be >= 1");
    }
    if (config.min_clicks == 0 || config.min_clicks > config.max_clicks || config.max_clicks > config.n_items) {
        throw ConfigError("synthetic click counts must satisfy 1 <= min <= max <= n_items");
    }
    Rng rng(config.seed);
    SyntheticCorpus out;
    out.decoder_weight = Matrix(config.latent_dim, config.n_items);
    for (double& w : out.decoder_weight.data()) w = config.weight_scale * rng.normal();
    out.decoder_bias.resize(config.n_items);
    for (double& b : out.decoder_bias) b = rng.normal();

    std::vector<std::vector<std::uint32_t>> rows(config.n_users);
    std::vector<double> logits(config.n_items), cdf(config.n_items);
    for (auto& row : rows) {
        std::fill(logits.begin(), logits.end(), 0.0);
        for (std::size_t k = 0; k < config.latent_dim; ++k) {
            const double z = rng.normal();
            const auto w = out.decoder_weight.row(k);
            for (std::size_t i = 0; i < config.n_items; ++i) logits[i] += z * w[i];
        }
        for (std::size_t i = 0; i < config.n_items; ++i) logits[i] += out.decoder_bias[i];
        const auto log_pi = log_softmax(logits);

        const std::size_t n_clicks =
            config.min_clicks + rng.below(config.max_clicks - config.min_clicks + 1);
        std::vector<std::uint8_t> taken(config.n_items, 0);
        // Draw from the multinomial restricted to items not yet taken.
        while (row.size() < n_clicks) {
            double total = 0.0;
            for (std::size_t i = 0; i < config.n_items; ++i) {
                total += taken[i] ? 0.0 : std::exp(log_pi[i]);
                cdf[i] = total;
            }
            const double u = rng.uniform() * total;
            auto pick = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            pick = std::min(pick, config.n_items - 1);
            while (taken[pick]) pick = (pick + 1) % config.n_items;
            taken[pick] = 1;
            row.push_back(static_cast<std::uint32_t>(pick));
        }
        std::sort(row.begin(), row.end());
    }

    std::vector<std::string> user_ids(config.n_users), item_ids(config.n_items);
    for (std::size_t u = 0; u < config.n_users; ++u) user_ids[u] = "u" + std::to_string(u);
    for (std::size_t i = 0; i < config.n_items; ++i) item_ids[i] = "i" + std::to_string(i);
    out.clicks = SparseClicks::from_rows(config.n_items, rows, std::move(user_ids), std::move(item_ids));
    return out;
}

}  // namespace vaecf
