#pragma once

// Vector kernels behind every dense operation.
//
// Each backend computes bit-identical results: reductions accumulate into
// four interleaved lanes (lane l takes elements l, l+4, l+8, ...), the lanes
// are combined as (l0 + l1) + (l2 + l3), and the tail is added sequentially.
// Multiplies and adds are never fused. The AVX2 and NEON variants follow that
// order exactly, so outputs do not depend on which CPU runs the code.

#include <cstddef>
#include <span>
#include <string_view>

namespace gma3d::simd {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
};

bool backend_supported(Backend b);

// Table for a specific backend. Throws ParameterError if unsupported here.
const KernelTable& kernels_for(Backend b);

// Active table. Chosen on first use: GMA3D_SIMD=scalar|avx2|neon if set,
// otherwise the widest backend the CPU supports.
const KernelTable& kernels();

Backend active_backend();
void set_active_backend(Backend b);

// Span conveniences over the active table.
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
double max(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace detail {
extern const KernelTable kScalarKernels;
const KernelTable* avx2_kernels();  // nullptr when not compiled in
const KernelTable* neon_kernels();
}  // namespace detail

}  // namespace gma3d::simd
