#pragma once
// Independent test-only oracles. These deliberately avoid the library's
// implementation paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracles {

// Prim's algorithm MST edge lengths for a 2-D point set
inline std::vector<double> mst_edge_lengths(const std::vector<std::pair<double, double>>& pts) {
    const std::size_t n = pts.size();
    if (n < 2) return {};
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<double> edges;
    in_tree[0] = true;
    auto dist = [&](std::size_t a, std::size_t b) {
        double dx = pts[a].first - pts[b].first;
        double dy = pts[a].second - pts[b].second;
        return std::sqrt(dx * dx + dy * dy);
    };
    for (std::size_t j = 1; j < n; ++j) best[j] = dist(0, j);
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t pick = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (!in_tree[j] && best[j] < bd) {
                bd = best[j];
                pick = j;
            }
        in_tree[pick] = true;
        edges.push_back(bd);
        for (std::size_t j = 0; j < n; ++j)
            if (!in_tree[j]) best[j] = std::min(best[j], dist(pick, j));
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

// exhaustive scan of all 256 thresholds maximizing between-class variance
inline int otsu_exhaustive(const std::array<std::uint64_t, 256>& hist) {
    double best = -1.0;
    int best_t = 0;
    for (int t = 0; t < 255; ++t) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int i = 0; i <= t; ++i) {
            n0 += double(hist[i]);
            s0 += double(i) * double(hist[i]);
        }
        for (int i = t + 1; i < 256; ++i) {
            n1 += double(hist[i]);
            s1 += double(i) * double(hist[i]);
        }
        if (n0 == 0 || n1 == 0) continue;
        double mu0 = s0 / n0, mu1 = s1 / n1;
        double total = n0 + n1;
        double var = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

} // namespace oracles
