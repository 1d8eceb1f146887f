#pragma once
// Synthetic microscopy images with planted per-clone differences in
// dispersion, cell size, roundness, and darkness. Cell centers come from
// a Thomas cluster process; cells render as filled rotated ellipses.

#include "clonescope/image.hpp"
#include "clonescope/manifest.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clonescope {

struct CloneSpec {
    std::string label;
    double parent_intensity = 4e-5; // parents per px^2
    double offspring_mean = 5.0;    // cells per cluster
    double offspring_scatter = 20.0; // Gaussian scatter std, px
    double size_mean = 14.0;        // major axis, px
    double size_std = 2.0;
    double roundness_mean = 0.7; // minor/major
    double roundness_std = 0.1;
    double intensity_mean = 150.0; // cell interior grayscale
    double intensity_std = 8.0;
    double background_mean = 205.0;
    double background_std = 3.0;
};

struct DatasetSpec {
    std::vector<CloneSpec> clones;
    int isolates_per_clone = 4;
    int preparations_per_isolate = 2; // the cross-validation protocol needs exactly 2
    int images_per_preparation = 5;
    int image_size = 512;
    std::uint64_t seed = 0;
    double isolate_jitter = 0.05; // multiplicative jitter on spec means per isolate
};

struct GroundTruthCell {
    double cx, cy;
    double major, minor;
    double orientation; // radians
    double intensity;
};

struct SynthImage {
    Image image;
    std::vector<GroundTruthCell> cells;
};

SynthImage generate_image(const CloneSpec& spec, int size, std::uint64_t seed);

struct GeneratedDataset {
    std::vector<ManifestEntry> manifest;
    std::string manifest_path;
};

// writes PNGs, a JSON-lines manifest, and per-image ground-truth files
// under out_dir
GeneratedDataset generate_dataset(const DatasetSpec& spec, const std::string& out_dir);

// A largest/roundest/darkest, B smallest and most dispersed, C most
// tightly clustered
std::vector<CloneSpec> clone_presets();

} // namespace clonescope
