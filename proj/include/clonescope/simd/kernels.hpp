#pragma once
// Data-parallel reduction/transform kernels used by the pixel and
// embedding inner loops. Scalar reference implementations plus AVX2
// variants, selected once at startup from CPUID.

#include <cstddef>
#include <string_view>

namespace clonescope::simd {

struct Kernels {
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    void (*minmax)(const double*, std::size_t, double& lo, double& hi);
    // y[i] = (x[i] - shift) * scale
    void (*scale_shift)(const double*, std::size_t, double shift, double scale, double*);
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double a, const double*, double*, std::size_t);
    double (*sqdist)(const double*, const double*, std::size_t);
};

// Active dispatch table (AVX2 when the CPU has it, scalar otherwise).
const Kernels& active();
// Reference implementations, always available; equivalence tests compare
// every active kernel against these.
const Kernels& scalar();
// nullptr when the build or CPU lacks AVX2
const Kernels* avx2();

std::string_view active_name();

inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double sumsq(const double* x, std::size_t n) { return active().sumsq(x, n); }
inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline double sqdist(const double* a, const double* b, std::size_t n) { return active().sqdist(a, b, n); }

} // namespace clonescope::simd
