#pragma once
// Grayscale float raster plus load/save. All pipeline stages after load
// work on single-channel data in [0,255] (normalized patches are the one
// real-valued exception).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace clonescope {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // row-major, size width*height

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

    double& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
    double at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

struct ImageMeta {
    std::string path;
    std::string image_id;
    std::string clone;
    std::string isolate;
    std::string preparation;
};

struct RawImage {
    Image gray; // luma-converted, rescaled to [0,255] at load
    ImageMeta meta;
};

// PNG/TIFF, 8- or 16-bit, 1 or 3 channels. 3-channel input is collapsed
// with luma weights 0.299/0.587/0.114; >8-bit data is linearly rescaled
// to [0,255].
Image load_gray_image(const std::string& path);
void save_gray_png(const Image& img, const std::string& path);
void save_label_png16(const std::vector<int>& labels, int width, int height, const std::string& path);

double image_mean(const Image& img);
// population std (divide by N)
double image_std(const Image& img);

// bilinear resampling to the given size
Image resize_bilinear(const Image& src, int out_w, int out_h);

} // namespace clonescope
