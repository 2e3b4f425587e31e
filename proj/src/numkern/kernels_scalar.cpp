#include "gma3d/numkern/simd.hpp"

namespace gma3d::simd {
namespace {

constexpr std::size_t kLanes = 4;

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc[kLanes] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t blocked = n - n % kLanes;
  for (std::size_t i = 0; i < blocked; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double p = a[i + l] * b[i + l];
      acc[l] = acc[l] + p;
    }
  }
  double result = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (std::size_t i = blocked; i < n; ++i) {
    const double p = a[i] * b[i];
    result = result + p;
  }
  return result;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc[kLanes] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t blocked = n - n % kLanes;
  for (std::size_t i = 0; i < blocked; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] = acc[l] + a[i + l];
  }
  double result = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (std::size_t i = blocked; i < n; ++i) result = result + a[i];
  return result;
}

double max_scalar(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (a[i] > m) m = a[i];
  }
  return m;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(double alpha, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * a[i];
}

}  // namespace

namespace detail {
const KernelTable kScalarKernels = {
    Backend::kScalar, dot_scalar, sum_scalar, max_scalar, axpy_scalar,
    add_scalar,       sub_scalar, mul_scalar, scale_scalar,
};
}  // namespace detail

}  // namespace gma3d::simd
