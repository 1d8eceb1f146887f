#include "clonescope/tiling.hpp"
#include "clonescope/simd/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace clonescope {

std::vector<Patch> tile_image(const Image& image, const std::string& image_id, const TilingConfig& cfg) {
    if (cfg.scale <= 0.0 || cfg.scale > 1.0) throw std::invalid_argument("scale must be in (0,1]");
    if (cfg.stride < 1) throw std::invalid_argument("stride must be >= 1");

    const Image* src = &image;
    Image scaled;
    if (cfg.scale != 1.0) {
        int sw = int(std::floor(image.width * cfg.scale));
        int sh = int(std::floor(image.height * cfg.scale));
        if (sw < 1 || sh < 1) return {};
        scaled = resize_bilinear(image, sw, sh);
        src = &scaled;
    }

    const int s = cfg.patch_size;
    const int rows = window_count(src->height, s, cfg.stride);
    const int cols = window_count(src->width, s, cfg.stride);

    std::vector<Patch> out;
    out.reserve(std::size_t(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            Patch p;
            p.row = r;
            p.col = c;
            p.image_id = image_id;
            p.pixels = Image(s, s);
            const int ox = c * cfg.stride;
            const int oy = r * cfg.stride;
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    p.pixels.at(x, y) = src->at(ox + x, oy + y);
            out.push_back(std::move(p));
        }
    }
    return out;
}

FilterDecision foreground_filter(const Patch& patch, double low, double high) {
    if (!(low < high)) throw std::invalid_argument("std thresholds: low must be < high");
    double sd = image_std(patch.pixels);
    return {sd >= low && sd <= high, sd};
}

NormStats compute_norm_stats(const std::vector<const Patch*>& foreground, std::size_t n, std::uint64_t seed) {
    if (foreground.empty()) throw std::runtime_error("no foreground");

    std::vector<const Patch*> sample = foreground;
    Rng rng(seed);
    rng.shuffle(sample.begin(), sample.end());
    if (sample.size() > n) sample.resize(n);

    double sum = 0.0, sumsq = 0.0;
    std::size_t count = 0;
    for (const Patch* p : sample) {
        sum += simd::sum(p->pixels.pixels.data(), p->pixels.size());
        sumsq += simd::sumsq(p->pixels.pixels.data(), p->pixels.size());
        count += p->pixels.size();
    }
    NormStats stats;
    stats.mean = sum / double(count);
    double var = sumsq / double(count) - stats.mean * stats.mean;
    stats.std = var > 0 ? std::sqrt(var) : 0.0;
    stats.sample_size = sample.size();
    stats.seed = seed;
    if (stats.std <= 0.0) throw std::runtime_error("degenerate std");
    return stats;
}

Patch normalize_patch(const Patch& patch, const NormStats& stats) {
    if (stats.std <= 0.0) throw std::runtime_error("degenerate std");
    Patch out = patch;
    simd::active().scale_shift(patch.pixels.pixels.data(), patch.pixels.size(),
                                   stats.mean, 1.0 / stats.std,
                                   out.pixels.pixels.data());
    out.normalized = true;
    return out;
}

Patch denormalize_patch(const Patch& patch, const NormStats& stats) {
    Patch out = patch;
    for (std::size_t i = 0; i < patch.pixels.size(); ++i)
        out.pixels.pixels[i] = patch.pixels.pixels[i] * stats.std + stats.mean;
    out.normalized = false;
    return out;
}

} // namespace clonescope
