#pragma once
// Cell segmentation and morphometry: Otsu thresholding, 8-connected
// labeling with diameter/border filters, boundary refinement, and
// moment-based region properties.

#include "clonescope/image.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace clonescope {

struct SegmentationConfig {
    double diameter_min = 10.0;
    double diameter_max = 40.0;
    int isolation_gap = 2;   // dilation radius for the adjacency check
    int refine_dilation = 3; // window growth for boundary correction
};

struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels; // 0 = background
    int count = 0;

    int at(int x, int y) const { return labels[std::size_t(y) * width + x]; }
    int& at(int x, int y) { return labels[std::size_t(y) * width + x]; }
};

struct Segment {
    int label = 0;
    std::vector<std::pair<int, int>> pixels; // (x, y)
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    bool touches_border = false;

    double area() const { return double(pixels.size()); }
    double equivalent_diameter() const;
};

struct RegionProps {
    double area = 0.0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    double major_axis = 0.0;
    double minor_axis = 0.0;
    double roundness = 0.0; // minor/major, 1 = circle
    double mean_intensity = 0.0;
};

using Histogram256 = std::array<std::uint64_t, 256>;

Histogram256 intensity_histogram(const Image& img);
Histogram256 intensity_histogram(const Image& img, const std::vector<std::pair<int, int>>& pixels);

// Threshold t maximizing between-class variance between [0,t] and
// [t+1,255]; lowest t wins ties. Throws on single-valued histograms.
int otsu_threshold(const Histogram256& hist);

struct SegmentationResult {
    LabelMap labels;
    std::vector<Segment> segments;
};

// Otsu + 8-connected components of the dark side, with diameter and
// border filtering. Unimodal patches yield zero segments.
SegmentationResult identify_primary_objects(const Image& patch, const SegmentationConfig& cfg);

// Segments whose `gap`-dilated mask touches no other segment.
std::vector<int> isolated_segments(const SegmentationResult& seg, int gap);

struct RefinedMask {
    std::vector<std::pair<int, int>> pixels;
    bool fallback = false; // window histogram was degenerate
};

RefinedMask refine_segment(const Image& patch, const Segment& segment, int dilation);

RegionProps region_properties(const std::vector<std::pair<int, int>>& mask, const Image& patch);

} // namespace clonescope
