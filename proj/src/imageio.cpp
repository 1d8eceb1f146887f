#include "clonescope/image.hpp"
#include "clonescope/simd/kernels.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace clonescope {

Image load_gray_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("cannot read image: " + path);
    if (m.channels() != 1 && m.channels() != 3)
        throw std::runtime_error("unsupported channel count in " + path);

    Image out(m.cols, m.rows);
    const int depth = m.depth();
    const double rescale = depth == CV_16U ? 255.0 / 65535.0 : 1.0;
    if (depth != CV_8U && depth != CV_16U)
        throw std::runtime_error("unsupported bit depth in " + path);

    for (int y = 0; y < m.rows; ++y) {
        for (int x = 0; x < m.cols; ++x) {
            double v;
            if (m.channels() == 1) {
                v = depth == CV_8U ? double(m.at<std::uint8_t>(y, x)) : double(m.at<std::uint16_t>(y, x));
            } else {
                // OpenCV stores BGR
                double b, g, r;
                if (depth == CV_8U) {
                    auto px = m.at<cv::Vec3b>(y, x);
                    b = px[0]; g = px[1]; r = px[2];
                } else {
                    auto px = m.at<cv::Vec3w>(y, x);
                    b = px[0]; g = px[1]; r = px[2];
                }
                v = 0.299 * r + 0.587 * g + 0.114 * b;
            }
            out.at(x, y) = v * rescale;
        }
    }
    return out;
}

void save_gray_png(const Image& img, const std::string& path) {
    cv::Mat m(img.height, img.width, CV_8UC1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            m.at<std::uint8_t>(y, x) = std::uint8_t(std::lround(std::clamp(img.at(x, y), 0.0, 255.0)));
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write " + path);
}

void save_label_png16(const std::vector<int>& labels, int width, int height, const std::string& path) {
    cv::Mat m(height, width, CV_16UC1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            m.at<std::uint16_t>(y, x) = std::uint16_t(labels[std::size_t(y) * width + x]);
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write " + path);
}

double image_mean(const Image& img) {
    return simd::sum(img.pixels.data(), img.size()) / double(img.size());
}

double image_std(const Image& img) {
    const double n = double(img.size());
    const double mean = simd::sum(img.pixels.data(), img.size()) / n;
    const double msq = simd::sumsq(img.pixels.data(), img.size()) / n;
    const double var = msq - mean * mean;
    return var > 0 ? std::sqrt(var) : 0.0;
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
    Image out(out_w, out_h);
    const double sx = double(src.width) / out_w;
    const double sy = double(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = int(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, src.height - 1);
        y0 = std::max(y0, 0);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = int(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, src.width - 1);
            x0 = std::max(x0, 0);
            double top = src.at(x0, y0) * (1 - wx) + src.at(x1, y0) * wx;
            double bot = src.at(x0, y1) * (1 - wx) + src.at(x1, y1) * wx;
            out.at(x, y) = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

} // namespace clonescope
