// Independent reference implementations used only by the tests. Nothing here
// calls into the code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

/// Triple-loop matrix product of row-major (m x k) and (k x n) arrays.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
            c[i * n + j] = s;
        }
    }
    return c;
}

/// Selection sort by (score desc, index asc): the reference ranking.
inline std::vector<std::uint32_t> rank(const std::vector<double>& scores, const std::vector<bool>& excluded = {}) {
    std::vector<bool> used(scores.size(), false);
    if (!excluded.empty()) used = excluded;
    std::vector<std::uint32_t> order;
    while (true) {
        std::size_t best = scores.size();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (used[i]) continue;
            if (best == scores.size() || scores[i] > scores[best]) best = i;
        }
        if (best == scores.size()) break;
        used[best] = true;
        order.push_back(static_cast<std::uint32_t>(best));
    }
    return order;
}

inline bool in_set(const std::vector<std::uint32_t>& set, std::uint32_t item) {
    for (auto s : set) {
        if (s == item) return true;
    }
    return false;
}

/// Hits in the top R counted one by one, over min(R, |held|).
inline double recall(const std::vector<std::uint32_t>& order, const std::vector<std::uint32_t>& held, std::size_t r) {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < r && k < order.size(); ++k) {
        if (in_set(held, order[k])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(std::min(r, held.size()));
}

/// DCG with (2^rel - 1) / log2(rank + 1), normalized by the DCG of the
/// relevance vector sorted descending.
inline double ndcg(const std::vector<std::uint32_t>& order, const std::vector<std::uint32_t>& held, std::size_t r) {
    std::vector<int> rel;
    for (std::size_t k = 0; k < r && k < order.size(); ++k) rel.push_back(in_set(held, order[k]) ? 1 : 0);
    double dcg = 0.0;
    for (std::size_t k = 0; k < rel.size(); ++k) dcg += (std::pow(2.0, rel[k]) - 1.0) / std::log2(static_cast<double>(k + 2));
    std::vector<int> ideal(std::max(r, held.size()), 0);
    for (std::size_t k = 0; k < held.size(); ++k) ideal[k] = 1;
    double idcg = 0.0;
    for (std::size_t k = 0; k < r; ++k) idcg += (std::pow(2.0, ideal[k]) - 1.0) / std::log2(static_cast<double>(k + 2));
    return dcg / idcg;
}

}  // namespace oracle
