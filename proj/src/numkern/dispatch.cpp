#include <atomic>
#include <cstdlib>
#include <string>

#include "gma3d/errors.hpp"
#include "gma3d/numkern/simd.hpp"

namespace gma3d::simd {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  if (const char* env = std::getenv("GMA3D_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &detail::kScalarKernels;
    if (want == "avx2" && backend_supported(Backend::kAvx2)) return detail::avx2_kernels();
    if (want == "neon" && backend_supported(Backend::kNeon)) return detail::neon_kernels();
  }
  if (backend_supported(Backend::kAvx2)) return detail::avx2_kernels();
  if (backend_supported(Backend::kNeon)) return detail::neon_kernels();
  return &detail::kScalarKernels;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{select_default()};
  return slot;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return detail::avx2_kernels() != nullptr && cpu_has_avx2();
    case Backend::kNeon:
      // NEON is mandatory on AArch64.
      return detail::neon_kernels() != nullptr;
  }
  return false;
}

const KernelTable& kernels_for(Backend b) {
  if (!backend_supported(b)) {
    throw ParameterError("SIMD backend not supported on this machine: " +
                         std::string(backend_name(b)));
  }
  switch (b) {
    case Backend::kAvx2:
      return *detail::avx2_kernels();
    case Backend::kNeon:
      return *detail::neon_kernels();
    case Backend::kScalar:
      break;
  }
  return detail::kScalarKernels;
}

const KernelTable& kernels() { return *active_slot().load(std::memory_order_acquire); }

Backend active_backend() { return kernels().backend; }

void set_active_backend(Backend b) {
  active_slot().store(&kernels_for(b), std::memory_order_release);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return kernels().dot(a.data(), b.data(), a.size());
}

double sum(std::span<const double> a) { return kernels().sum(a.data(), a.size()); }

double max(std::span<const double> a) {
  if (a.empty()) throw ShapeError("max: empty input");
  return kernels().max(a.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace gma3d::simd
