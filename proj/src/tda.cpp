#include "clonescope/tda.hpp"
#include "clonescope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace clonescope {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

} // namespace

PointCloud centers_point_cloud(const std::vector<RegionProps>& props, const std::string& patch_id) {
    PointCloud cloud;
    cloud.patch_id = patch_id;
    cloud.points.reserve(props.size());
    for (const auto& rp : props) cloud.points.push_back({rp.centroid_x, rp.centroid_y});
    return cloud;
}

PersistenceDiagram h0_persistence(const PointCloud& cloud) {
    PersistenceDiagram d;
    d.patch_id = cloud.patch_id;
    const std::size_t n = cloud.points.size();
    if (n == 0) return d;
    d.essential_dropped = 1;
    if (n == 1) return d;

    struct Edge {
        double dist;
        int i, j;
    };
    std::vector<Edge> edges;
    edges.reserve(n * (n - 1) / 2);
    for (int i = 0; i < int(n); ++i) {
        for (int j = i + 1; j < int(n); ++j) {
            double dx = cloud.points[i].first - cloud.points[j].first;
            double dy = cloud.points[i].second - cloud.points[j].second;
            edges.push_back({std::sqrt(dx * dx + dy * dy), i, j});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    UnionFind uf(n);
    d.deaths.reserve(n - 1);
    for (const Edge& e : edges) {
        if (uf.unite(e.i, e.j)) {
            d.deaths.push_back(e.dist);
            if (d.deaths.size() == n - 1) break;
        }
    }
    return d;
}

PBoWVector pbow(const PersistenceDiagram& diagram) {
    PBoWVector v;
    v.patch_id = diagram.patch_id;
    for (double death : diagram.deaths) {
        if (death >= double(kPBoWBins))
            ++v.overflow;
        else
            ++v.counts[int(std::floor(death))];
    }
    return v;
}

ClonePBoWProfile average_pbow(const std::vector<PBoWVector>& vectors, const std::string& clone,
                              double level) {
    if (vectors.empty()) throw std::invalid_argument("no vectors");
    ClonePBoWProfile prof;
    prof.clone = clone;
    prof.n = vectors.size();
    const double n = double(vectors.size());
    for (int b = 0; b < kPBoWBins; ++b) {
        double s = 0.0;
        for (const auto& v : vectors) s += v.counts[b];
        prof.mean[b] = s / n;
    }
    if (vectors.size() >= 2) {
        double t = student_t_quantile(0.5 + level / 2.0, n - 1);
        for (int b = 0; b < kPBoWBins; ++b) {
            double s2 = 0.0;
            for (const auto& v : vectors) {
                double d = double(v.counts[b]) - prof.mean[b];
                s2 += d * d;
            }
            s2 /= (n - 1);
            prof.ci_half_width[b] = t * std::sqrt(s2 / n);
        }
    }
    return prof;
}

BinSignificance bin_significance(const std::vector<PBoWVector>& group_a,
                                 const std::vector<PBoWVector>& group_b, double alpha) {
    if (group_a.size() < 2 || group_b.size() < 2)
        throw std::invalid_argument("need >= 2 patches per group");
    BinSignificance out;
    out.alpha = alpha;
    std::vector<double> a(group_a.size()), b(group_b.size());
    for (int bin = 0; bin < kPBoWBins; ++bin) {
        for (std::size_t i = 0; i < group_a.size(); ++i) a[i] = group_a[i].counts[bin];
        for (std::size_t i = 0; i < group_b.size(); ++i) b[i] = group_b[i].counts[bin];
        out.p[bin] = welch_t(a, b).p;
        if (out.p[bin] < alpha) out.significant_bins.push_back(bin);
    }
    return out;
}

std::vector<ScoredPatch> representative_patches(const std::vector<PBoWVector>& patches,
                                                const ClonePBoWProfile& c1, const ClonePBoWProfile& c2,
                                                const std::vector<int>& features, std::size_t k) {
    if (features.empty()) throw std::invalid_argument("no discriminative bins");
    std::vector<ScoredPatch> scored;
    scored.reserve(patches.size());
    for (const auto& p : patches) {
        double s = 0.0;
        for (int f : features)
            s += std::fabs(double(p.counts[f]) - c1.mean[f]) - std::fabs(double(p.counts[f]) - c2.mean[f]);
        scored.push_back({p.patch_id, s});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredPatch& a, const ScoredPatch& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.patch_id < b.patch_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

} // namespace clonescope
