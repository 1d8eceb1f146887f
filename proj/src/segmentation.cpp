#include "clonescope/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace clonescope {

double Segment::equivalent_diameter() const {
    return 2.0 * std::sqrt(area() / std::numbers::pi);
}

namespace {

int bin_of(double v) {
    int b = int(std::lround(v));
    return std::clamp(b, 0, 255);
}

} // namespace

Histogram256 intensity_histogram(const Image& img) {
    Histogram256 h{};
    for (double v : img.pixels) ++h[bin_of(v)];
    return h;
}

Histogram256 intensity_histogram(const Image& img, const std::vector<std::pair<int, int>>& pixels) {
    Histogram256 h{};
    for (auto [x, y] : pixels) ++h[bin_of(img.at(x, y))];
    return h;
}

int otsu_threshold(const Histogram256& hist) {
    std::uint64_t total = 0;
    double weighted = 0.0;
    int nonempty = 0;
    for (int i = 0; i < 256; ++i) {
        total += hist[i];
        weighted += double(i) * double(hist[i]);
        nonempty += hist[i] > 0;
    }
    if (nonempty < 2) throw std::runtime_error("unimodal degenerate");

    double best = -1.0;
    int best_t = 0;
    std::uint64_t n0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        n0 += hist[t];
        sum0 += double(t) * double(hist[t]);
        std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        double mu0 = sum0 / double(n0);
        double mu1 = (weighted - sum0) / double(n1);
        double var = double(n0) * double(n1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

SegmentationResult identify_primary_objects(const Image& patch, const SegmentationConfig& cfg) {
    if (!(cfg.diameter_min < cfg.diameter_max))
        throw std::invalid_argument("diameter range");

    SegmentationResult out;
    out.labels.width = patch.width;
    out.labels.height = patch.height;
    out.labels.labels.assign(patch.size(), 0);

    Histogram256 hist = intensity_histogram(patch);
    int threshold;
    try {
        threshold = otsu_threshold(hist);
    } catch (const std::runtime_error&) {
        return out; // constant patch, nothing to segment
    }

    // foreground = dark side (cells are darker than background)
    auto is_fg = [&](int x, int y) { return patch.at(x, y) <= double(threshold); };

    // 8-connected flood fill
    std::vector<int> raw(patch.size(), 0);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    std::vector<Segment> segs;
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            if (!is_fg(x, y) || raw[std::size_t(y) * patch.width + x]) continue;
            ++next;
            Segment seg;
            seg.label = next;
            seg.min_x = seg.max_x = x;
            seg.min_y = seg.max_y = y;
            stack.push_back({x, y});
            raw[std::size_t(y) * patch.width + x] = next;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                seg.pixels.push_back({cx, cy});
                seg.min_x = std::min(seg.min_x, cx);
                seg.max_x = std::max(seg.max_x, cx);
                seg.min_y = std::min(seg.min_y, cy);
                seg.max_y = std::max(seg.max_y, cy);
                if (cx == 0 || cy == 0 || cx == patch.width - 1 || cy == patch.height - 1)
                    seg.touches_border = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (!patch.in_bounds(nx, ny)) continue;
                        std::size_t idx = std::size_t(ny) * patch.width + nx;
                        if (raw[idx] || !is_fg(nx, ny)) continue;
                        raw[idx] = next;
                        stack.push_back({nx, ny});
                    }
                }
            }
            segs.push_back(std::move(seg));
        }
    }

    // diameter + border filters, then renumber 1..count
    int kept = 0;
    for (Segment& seg : segs) {
        double d = seg.equivalent_diameter();
        if (d < cfg.diameter_min || d > cfg.diameter_max || seg.touches_border) continue;
        seg.label = ++kept;
        for (auto [x, y] : seg.pixels) out.labels.at(x, y) = kept;
        out.segments.push_back(std::move(seg));
    }
    out.labels.count = kept;
    return out;
}

std::vector<int> isolated_segments(const SegmentationResult& seg, int gap) {
    if (gap < 1) throw std::invalid_argument("gap must be >= 1");
    std::vector<int> result;
    for (const Segment& s : seg.segments) {
        bool adjacent = false;
        for (auto [x, y] : s.pixels) {
            for (int dy = -gap; dy <= gap && !adjacent; ++dy) {
                for (int dx = -gap; dx <= gap; ++dx) {
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= seg.labels.width || ny >= seg.labels.height) continue;
                    int l = seg.labels.at(nx, ny);
                    if (l != 0 && l != s.label) {
                        adjacent = true;
                        break;
                    }
                }
            }
            if (adjacent) break;
        }
        if (!adjacent) result.push_back(s.label);
    }
    return result;
}

RefinedMask refine_segment(const Image& patch, const Segment& segment, int dilation) {
    if (dilation < 1) throw std::invalid_argument("dilation must be >= 1");

    // dilated window around the segment (square structuring element)
    std::vector<char> window(patch.size(), 0);
    std::vector<std::pair<int, int>> window_pixels;
    for (auto [x, y] : segment.pixels) {
        for (int dy = -dilation; dy <= dilation; ++dy) {
            for (int dx = -dilation; dx <= dilation; ++dx) {
                int nx = x + dx, ny = y + dy;
                if (!patch.in_bounds(nx, ny)) continue;
                std::size_t idx = std::size_t(ny) * patch.width + nx;
                if (!window[idx]) {
                    window[idx] = 1;
                    window_pixels.push_back({nx, ny});
                }
            }
        }
    }

    RefinedMask out;
    int threshold;
    try {
        threshold = otsu_threshold(intensity_histogram(patch, window_pixels));
    } catch (const std::runtime_error&) {
        out.pixels = segment.pixels;
        out.fallback = true;
        return out;
    }

    // dark side within the window, largest 8-connected component
    std::vector<int> comp(patch.size(), 0);
    int next = 0;
    std::size_t best_size = 0;
    int best_label = 0;
    std::vector<std::vector<std::pair<int, int>>> comps(1);
    std::vector<std::pair<int, int>> stack;
    for (auto [sx, sy] : window_pixels) {
        std::size_t sidx = std::size_t(sy) * patch.width + sx;
        if (comp[sidx] || patch.at(sx, sy) > double(threshold)) continue;
        ++next;
        comps.emplace_back();
        comp[sidx] = next;
        stack.push_back({sx, sy});
        while (!stack.empty()) {
            auto [cx, cy] = stack.back();
            stack.pop_back();
            comps[next].push_back({cx, cy});
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    int nx = cx + dx, ny = cy + dy;
                    if (!patch.in_bounds(nx, ny)) continue;
                    std::size_t idx = std::size_t(ny) * patch.width + nx;
                    if (comp[idx] || !window[idx] || patch.at(nx, ny) > double(threshold)) continue;
                    comp[idx] = next;
                    stack.push_back({nx, ny});
                }
            }
        }
        if (comps[next].size() > best_size) {
            best_size = comps[next].size();
            best_label = next;
        }
    }

    if (best_label == 0) {
        out.pixels = segment.pixels;
        out.fallback = true;
        return out;
    }
    out.pixels = std::move(comps[best_label]);
    return out;
}

RegionProps region_properties(const std::vector<std::pair<int, int>>& mask, const Image& patch) {
    if (mask.empty()) throw std::invalid_argument("empty mask");

    RegionProps rp;
    rp.area = double(mask.size());
    double sx = 0, sy = 0, si = 0;
    for (auto [x, y] : mask) {
        sx += x;
        sy += y;
        si += patch.at(x, y);
    }
    rp.centroid_x = sx / rp.area;
    rp.centroid_y = sy / rp.area;
    rp.mean_intensity = si / rp.area;

    // second central moments -> moment-matched ellipse axes
    double mxx = 0, myy = 0, mxy = 0;
    for (auto [x, y] : mask) {
        double dx = x - rp.centroid_x;
        double dy = y - rp.centroid_y;
        mxx += dx * dx;
        myy += dy * dy;
        mxy += dx * dy;
    }
    mxx /= rp.area;
    myy /= rp.area;
    mxy /= rp.area;
    double tr = mxx + myy;
    double det = mxx * myy - mxy * mxy;
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    double l1 = tr / 2.0 + disc;
    double l2 = std::max(0.0, tr / 2.0 - disc);
    rp.major_axis = 4.0 * std::sqrt(l1);
    rp.minor_axis = 4.0 * std::sqrt(l2);
    rp.roundness = rp.major_axis > 0 ? rp.minor_axis / rp.major_axis : 1.0;
    if (rp.roundness <= 0.0) rp.roundness = 1.0 / rp.major_axis; // single-row mask guard
    return rp;
}

} // namespace clonescope
