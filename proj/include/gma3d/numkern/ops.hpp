#pragma once

// Eager dense operations. Matrix arguments are rank-2 DenseArrays; the
// shape checks throw ShapeError naming both operands.

#include <cstddef>
#include <span>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"

namespace gma3d::numkern {

DenseArray matmul(const DenseArray& a, const DenseArray& b);
// a · bᵀ
DenseArray matmul_nt(const DenseArray& a, const DenseArray& b);
// aᵀ · b
DenseArray matmul_tn(const DenseArray& a, const DenseArray& b);
DenseArray transpose(const DenseArray& a);

DenseArray add(const DenseArray& a, const DenseArray& b);
DenseArray sub(const DenseArray& a, const DenseArray& b);
DenseArray mul(const DenseArray& a, const DenseArray& b);
DenseArray scale(const DenseArray& a, double s);

// Broadcast a 1×C row over every row of a.
DenseArray add_row(const DenseArray& a, const DenseArray& row);
DenseArray mul_row(const DenseArray& a, const DenseArray& row);

DenseArray relu(const DenseArray& a);
DenseArray softplus(const DenseArray& a);
DenseArray sigmoid(const DenseArray& a);

// Row-wise softmax with per-row max subtraction.
DenseArray softmax_rows(const DenseArray& m);

// Divides each row by its sum. Rows must have a positive sum.
DenseArray row_normalize(const DenseArray& m);

// Per-column standardization over rows: (a - mean) / sqrt(var + eps), with
// the population variance. `inv_std`, if given, receives 1/sqrt(var + eps).
DenseArray standardize_cols(const DenseArray& a, double eps, std::vector<double>* inv_std = nullptr);

double sum_all(const DenseArray& a);
// Column sums as a 1×C row.
DenseArray sum_over_rows(const DenseArray& a);
// Row sums as an R×1 column.
DenseArray sum_over_cols(const DenseArray& a);

DenseArray gather_rows(const DenseArray& a, std::span<const std::size_t> idx);
// Inverse of gather_rows for gradients: out[idx[r]] += g[r].
DenseArray scatter_add_rows(const DenseArray& g, std::span<const std::size_t> idx,
                            std::size_t out_rows);

DenseArray concat_cols(const std::vector<const DenseArray*>& parts);
DenseArray slice_cols(const DenseArray& a, std::size_t begin, std::size_t end);

// out_i = Σ_s w(i, s) · v(idx[i*k + s]) with k = w.cols().
DenseArray neighbor_weighted_sum(const DenseArray& w, const DenseArray& v,
                                 std::span<const std::size_t> idx);

// Mean over rows of the squared Euclidean row norm.
double mean_row_sq_norm(const DenseArray& a);

}  // namespace gma3d::numkern
