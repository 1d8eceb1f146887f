#pragma once
// End-to-end orchestration: manifest -> patches -> bags -> training and
// the two explainability paths.

#include "clonescope/manifest.hpp"
#include "clonescope/mil.hpp"
#include "clonescope/segmentation.hpp"
#include "clonescope/stats.hpp"
#include "clonescope/tda.hpp"
#include "clonescope/tiling.hpp"

#include <map>
#include <string>
#include <vector>

namespace clonescope {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    TilingConfig tiling;
    SegmentationConfig seg;
    std::size_t norm_sample = 10000;
    std::uint64_t seed = 0;
    std::string embedder = "builtin"; // builtin | import
    std::string embeddings_path;      // EMB1 archive for the import embedder
    double alpha = 0.01;
    int representative_count = 5;
};

struct PreparedData {
    std::vector<MilBag> bags;
    std::vector<std::string> clone_order; // label index order
    NormStats norm_stats;
    std::map<std::string, ManifestEntry> manifest_by_id;
};

// tile -> foreground filter -> normalization -> embeddings, grouped into
// labeled bags. Bags with zero foreground patches are dropped with a
// warning record.
PreparedData prepare_bags(const std::vector<ManifestEntry>& manifest, const PipelineConfig& cfg,
                          std::vector<std::string>* warnings = nullptr);

// re-extract one raw (unnormalized) patch by its id, re-tiling the
// parent image deterministically
Patch extract_patch(const ManifestEntry& entry, const std::string& patch_id, const TilingConfig& cfg);

struct CellRecord {
    std::string patch_id;
    std::string clone;
    RegionProps props;
    bool refined_fallback = false;
};

struct CloneComparison {
    std::string clone_a;
    std::string clone_b;
    TestResult welch;
    TestResult mann_whitney;
};

struct PBoWPairAnalysis {
    std::string clone_a; // C1
    std::string clone_b; // C2
    BinSignificance significance;
    std::vector<ScoredPatch> representatives_a;
    std::vector<ScoredPatch> representatives_b;
};

struct ExplainResult {
    std::vector<EssentialPatch> essential;
    // path 1: spatial arrangement
    std::map<std::string, std::vector<PBoWVector>> pbows_by_clone;
    std::map<std::string, ClonePBoWProfile> profiles;
    std::vector<PBoWPairAnalysis> pbow_pairs;
    // path 2: individual cells
    std::vector<CellRecord> cells;
    std::vector<CloneComparison> size_tests;
    std::vector<CloneComparison> roundness_tests;
    std::vector<CloneComparison> intensity_tests;
    std::vector<std::string> summary; // textual ordering statements
};

// runs both explainability paths on the essential patches of a trained
// attention model evaluated on the given test bags
ExplainResult explain(const MilModel& model, const std::vector<const MilBag*>& test_bags,
                      const PreparedData& data, const PipelineConfig& cfg);

} // namespace clonescope
