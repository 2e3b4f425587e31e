#include "gma3d/numkern/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define GMA3D_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#endif

namespace gma3d::simd {

#ifdef GMA3D_HAVE_AVX2_KERNELS
namespace {

#define GMA3D_AVX2 __attribute__((target("avx2")))

GMA3D_AVX2 inline double combine_lanes(__m256d acc) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

GMA3D_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    const __m256d p = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, p);
  }
  double result = combine_lanes(acc);
  for (std::size_t i = blocked; i < n; ++i) {
    const double p = a[i] * b[i];
    result = result + p;
  }
  return result;
}

GMA3D_AVX2 double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  }
  double result = combine_lanes(acc);
  for (std::size_t i = blocked; i < n; ++i) result = result + a[i];
  return result;
}

GMA3D_AVX2 double max_avx2(const double* a, std::size_t n) {
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 4; i < blocked; i += 4) {
    acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double m = lanes[0];
  for (int l = 1; l < 4; ++l) m = lanes[l] > m ? lanes[l] : m;
  for (std::size_t i = blocked; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

GMA3D_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (std::size_t i = blocked; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

GMA3D_AVX2 void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = blocked; i < n; ++i) out[i] = a[i] + b[i];
}

GMA3D_AVX2 void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = blocked; i < n; ++i) out[i] = a[i] - b[i];
}

GMA3D_AVX2 void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = blocked; i < n; ++i) out[i] = a[i] * b[i];
}

GMA3D_AVX2 void scale_avx2(double alpha, const double* a, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t blocked = n - n % 4;
  for (std::size_t i = 0; i < blocked; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  }
  for (std::size_t i = blocked; i < n; ++i) out[i] = alpha * a[i];
}

#undef GMA3D_AVX2

const KernelTable kAvx2Kernels = {
    Backend::kAvx2, dot_avx2, sum_avx2, max_avx2, axpy_avx2,
    add_avx2,       sub_avx2, mul_avx2, scale_avx2,
};

}  // namespace
#endif

namespace detail {
const KernelTable* avx2_kernels() {
#ifdef GMA3D_HAVE_AVX2_KERNELS
  return &kAvx2Kernels;
#else
  return nullptr;
#endif
}
}  // namespace detail

}  // namespace gma3d::simd
