#pragma once
// Full image -> normalized foreground patches: downscale, sliding-window
// tiling, std-based foreground filter, global normalization stats.

#include "clonescope/image.hpp"
#include "clonescope/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clonescope {

struct TilingConfig {
    double scale = 0.5;
    int patch_size = 250;
    int stride = 125;
    double std_low = 1.5;
    double std_high = 30.0;
};

struct Patch {
    Image pixels; // patch_size x patch_size
    int row = 0;
    int col = 0;
    std::string image_id;
    bool foreground = false;
    bool normalized = false;
    double measured_std = 0.0;

    std::string patch_id() const {
        return image_id + "_r" + std::to_string(row) + "_c" + std::to_string(col);
    }
};

struct NormStats {
    double mean = 0.0;
    double std = 0.0;
    std::size_t sample_size = 0;
    std::uint64_t seed = 0;
};

// number of full windows along one axis; 0 when the window does not fit
inline int window_count(int extent, int size, int stride) {
    return extent >= size ? (extent - size) / stride + 1 : 0;
}

// Row-major full windows over the scaled image. Images smaller than one
// patch yield an empty list; the caller can tell from the count.
std::vector<Patch> tile_image(const Image& image, const std::string& image_id, const TilingConfig& cfg);

struct FilterDecision {
    bool keep;
    double std;
};
FilterDecision foreground_filter(const Patch& patch, double low, double high);

// Pixel mean/std over up to n randomly sampled foreground patches.
NormStats compute_norm_stats(const std::vector<const Patch*>& foreground, std::size_t n, std::uint64_t seed);

Patch normalize_patch(const Patch& patch, const NormStats& stats);
Patch denormalize_patch(const Patch& patch, const NormStats& stats);

} // namespace clonescope
