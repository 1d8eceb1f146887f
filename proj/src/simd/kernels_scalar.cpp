#include "clonescope/simd/kernels.hpp"

#include <algorithm>

namespace clonescope::simd {

namespace {

double s_sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_sumsq(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void s_minmax(const double* x, std::size_t n, double& lo, double& hi) {
    lo = x[0];
    hi = x[0];
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
}

void s_scale_shift(const double* x, std::size_t n, double shift, double scale, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - shift) * scale;
}

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double s_sqdist(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace

const Kernels& scalar() {
    static const Kernels k{s_sum, s_sumsq, s_minmax, s_scale_shift, s_dot, s_axpy, s_sqdist};
    return k;
}

const Kernels& active() {
    static const Kernels* chosen = [] {
        if (const Kernels* k = avx2()) return k;
        return &scalar();
    }();
    return *chosen;
}

std::string_view active_name() {
    return &active() == &scalar() ? "scalar" : "avx2";
}

} // namespace clonescope::simd
