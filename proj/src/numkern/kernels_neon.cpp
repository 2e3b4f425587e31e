#include "gma3d/numkern/simd.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)
#define GMA3D_HAVE_NEON_KERNELS 1
#include <arm_neon.h>
#endif

namespace gma3d::simd {

#ifdef GMA3D_HAVE_NEON_KERNELS
namespace {

// Two float64x2 registers hold the four accumulation lanes: lo = {l0, l1},
// hi = {l2, l3}.
inline double combine_lanes(float64x2_t lo, float64x2_t hi) {
  return (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
         (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double result = combine_lanes(lo, hi);
  for (std::size_t i = blocked; i < n; ++i) {
    const double p = a[i] * b[i];
    result = result + p;
  }
  return result;
}

double sum_neon(const double* a, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    lo = vaddq_f64(lo, vld1q_f64(a + i));
    hi = vaddq_f64(hi, vld1q_f64(a + i + 2));
  }
  double result = combine_lanes(lo, hi);
  for (std::size_t i = blocked; i < n; ++i) result = result + a[i];
  return result;
}

double max_neon(const double* a, std::size_t n) {
  double m = a[0];
  std::size_t i = 1;
  if (n >= 2) {
    float64x2_t acc = vld1q_f64(a);
    const std::size_t blocked = n - n % 2;
    for (i = 2; i < blocked; i += 2) acc = vmaxq_f64(acc, vld1q_f64(a + i));
    m = vmaxvq_f64(acc);
    i = blocked;
  }
  for (; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const std::size_t blocked = n - n % 2;
  for (std::size_t i = 0; i < blocked; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (std::size_t i = blocked; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

template <typename VecOp, typename ScalarOp>
inline void binary(const double* a, const double* b, double* out, std::size_t n, VecOp vop,
                   ScalarOp sop) {
  const std::size_t blocked = n - n % 2;
  for (std::size_t i = 0; i < blocked; i += 2) {
    vst1q_f64(out + i, vop(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (std::size_t i = blocked; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](float64x2_t x, float64x2_t y) { return vaddq_f64(x, y); },
         [](double x, double y) { return x + y; });
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](float64x2_t x, float64x2_t y) { return vsubq_f64(x, y); },
         [](double x, double y) { return x - y; });
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](float64x2_t x, float64x2_t y) { return vmulq_f64(x, y); },
         [](double x, double y) { return x * y; });
}

void scale_neon(double alpha, const double* a, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const std::size_t blocked = n - n % 2;
  for (std::size_t i = 0; i < blocked; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(a + i)));
  for (std::size_t i = blocked; i < n; ++i) out[i] = alpha * a[i];
}

const KernelTable kNeonKernels = {
    Backend::kNeon, dot_neon, sum_neon, max_neon, axpy_neon,
    add_neon,       sub_neon, mul_neon, scale_neon,
};

}  // namespace
#endif

namespace detail {
const KernelTable* neon_kernels() {
#ifdef GMA3D_HAVE_NEON_KERNELS
  return &kNeonKernels;
#else
  return nullptr;
#endif
}
}  // namespace detail

}  // namespace gma3d::simd
