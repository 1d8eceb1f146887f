#pragma once
// Spatial-arrangement analysis of cell centers: dimension-0 persistence
// of the distance filtration, death-time bag-of-words, per-clone
// profiles, per-bin significance, and representative-patch selection.

#include "clonescope/segmentation.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace clonescope {

struct PointCloud {
    std::vector<std::pair<double, double>> points;
    std::string patch_id;
};

struct PersistenceDiagram {
    std::vector<double> deaths; // births are all 0
    int essential_dropped = 0;  // the never-dying component (1 for non-empty clouds)
    std::string patch_id;
};

inline constexpr int kPBoWBins = 128;

struct PBoWVector {
    std::array<std::uint32_t, kPBoWBins> counts{};
    std::uint32_t overflow = 0; // deaths >= 128
    std::string patch_id;

    std::uint64_t total() const {
        std::uint64_t t = overflow;
        for (auto c : counts) t += c;
        return t;
    }
};

struct ClonePBoWProfile {
    std::string clone;
    std::array<double, kPBoWBins> mean{};
    std::array<double, kPBoWBins> ci_half_width{};
    std::size_t n = 0;
};

struct BinSignificance {
    std::array<double, kPBoWBins> p{};
    double alpha = 0.01;
    std::vector<int> significant_bins;
};

// one point per segment centroid, in segment label order
PointCloud centers_point_cloud(const std::vector<RegionProps>& props, const std::string& patch_id);

// Union-find over ascending pairwise distances; the death multiset
// equals the MST edge lengths. Ties break in lexicographic pair order.
PersistenceDiagram h0_persistence(const PointCloud& cloud);

PBoWVector pbow(const PersistenceDiagram& diagram);

// per-bin mean and 0.99 Student-t confidence half-width
ClonePBoWProfile average_pbow(const std::vector<PBoWVector>& vectors, const std::string& clone,
                              double level = 0.99);

// per-bin two-sided Welch t-test between two groups of patch PBoWs
BinSignificance bin_significance(const std::vector<PBoWVector>& group_a,
                                 const std::vector<PBoWVector>& group_b, double alpha);

struct ScoredPatch {
    std::string patch_id;
    double score;
};

// score(P) = sum over f of |C_P[f]-C1[f]| - |C_P[f]-C2[f]|; the k lowest
// are the clone-1 representatives. Ties break by patch id.
std::vector<ScoredPatch> representative_patches(const std::vector<PBoWVector>& patches,
                                                const ClonePBoWProfile& c1, const ClonePBoWProfile& c2,
                                                const std::vector<int>& features, std::size_t k);

} // namespace clonescope
