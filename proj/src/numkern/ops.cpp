#include "gma3d/numkern/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gma3d/errors.hpp"
#include "gma3d/numkern/simd.hpp"

namespace gma3d::numkern {
namespace {

void require_matrix(const DenseArray& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const DenseArray& a, const DenseArray& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                   " and " + shape_string(b.shape()));
}

void require_same(const char* op, const DenseArray& a, const DenseArray& b) {
  if (!a.same_shape(b)) mismatch(op, a, b);
}

void require_row_broadcast(const char* op, const DenseArray& a, const DenseArray& row) {
  require_matrix(a, op);
  if (row.size() != a.cols() || (row.rank() == 2 && row.rows() != 1)) mismatch(op, a, row);
}

}  // namespace

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseArray c = DenseArray::zeros({m, n});
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < m; ++i) {
    double* out = c.row(i).data();
    for (std::size_t p = 0; p < k; ++p) kt.axpy(a(i, p), b.row(p).data(), out, n);
  }
  return c;
}

DenseArray matmul_nt(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  DenseArray c = DenseArray::zeros({m, n});
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) c(i, j) = kt.dot(ar, b.row(j).data(), k);
  }
  return c;
}

DenseArray matmul_tn(const DenseArray& a, const DenseArray& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows()) mismatch("matmul_tn", a, b);
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  DenseArray c = DenseArray::zeros({m, n});
  const auto& kt = simd::kernels();
  for (std::size_t p = 0; p < k; ++p) {
    const double* br = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) kt.axpy(a(p, i), br, c.row(i).data(), n);
  }
  return c;
}

DenseArray transpose(const DenseArray& a) {
  require_matrix(a, "transpose");
  DenseArray t = DenseArray::zeros({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

DenseArray add(const DenseArray& a, const DenseArray& b) {
  require_same("add", a, b);
  DenseArray out = DenseArray::zeros(a.shape());
  simd::kernels().add(a.data().data(), b.data().data(), out.data().data(), a.size());
  return out;
}

DenseArray sub(const DenseArray& a, const DenseArray& b) {
  require_same("sub", a, b);
  DenseArray out = DenseArray::zeros(a.shape());
  simd::kernels().sub(a.data().data(), b.data().data(), out.data().data(), a.size());
  return out;
}

DenseArray mul(const DenseArray& a, const DenseArray& b) {
  require_same("mul", a, b);
  DenseArray out = DenseArray::zeros(a.shape());
  simd::kernels().mul(a.data().data(), b.data().data(), out.data().data(), a.size());
  return out;
}

DenseArray scale(const DenseArray& a, double s) {
  DenseArray out = DenseArray::zeros(a.shape());
  simd::kernels().scale(s, a.data().data(), out.data().data(), a.size());
  return out;
}

DenseArray add_row(const DenseArray& a, const DenseArray& row) {
  require_row_broadcast("add_row", a, row);
  DenseArray out = DenseArray::zeros(a.shape());
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    kt.add(a.row(i).data(), row.data().data(), out.row(i).data(), a.cols());
  }
  return out;
}

DenseArray mul_row(const DenseArray& a, const DenseArray& row) {
  require_row_broadcast("mul_row", a, row);
  DenseArray out = DenseArray::zeros(a.shape());
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    kt.mul(a.row(i).data(), row.data().data(), out.row(i).data(), a.cols());
  }
  return out;
}

DenseArray relu(const DenseArray& a) {
  DenseArray out = DenseArray::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

DenseArray softplus(const DenseArray& a) {
  DenseArray out = DenseArray::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    out[i] = (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
  }
  return out;
}

DenseArray sigmoid(const DenseArray& a) {
  DenseArray out = DenseArray::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

DenseArray softmax_rows(const DenseArray& m) {
  require_matrix(m, "softmax_rows");
  DenseArray out = DenseArray::zeros(m.shape());
  if (m.cols() == 0) return out;
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    auto o = out.row(i);
    const double peak = kt.max(in.data(), in.size());
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = std::exp(in[j] - peak);
    const double total = kt.sum(o.data(), o.size());
    kt.scale(1.0 / total, o.data(), o.data(), o.size());
  }
  return out;
}

DenseArray row_normalize(const DenseArray& m) {
  require_matrix(m, "row_normalize");
  DenseArray out = DenseArray::zeros(m.shape());
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double total = kt.sum(m.row(i).data(), m.cols());
    if (!(total > 0.0)) {
      throw NumericalError("row_normalize: non-positive row sum at row " + std::to_string(i), i);
    }
    kt.scale(1.0 / total, m.row(i).data(), out.row(i).data(), m.cols());
  }
  return out;
}

DenseArray standardize_cols(const DenseArray& a, double eps, std::vector<double>* inv_std) {
  require_matrix(a, "standardize_cols");
  const std::size_t n = a.rows(), d = a.cols();
  if (n == 0) throw PreconditionError("standardize_cols: no rows");
  const DenseArray at = transpose(a);
  DenseArray out = DenseArray::zeros(a.shape());
  if (inv_std) inv_std->assign(d, 0.0);
  const auto& kt = simd::kernels();
  std::vector<double> centered(n);
  for (std::size_t c = 0; c < d; ++c) {
    const auto col = at.row(c);
    const double mean = kt.sum(col.data(), n) / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered[r] = col[r] - mean;
    const double var = kt.dot(centered.data(), centered.data(), n) / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < n; ++r) out(r, c) = centered[r] * is;
    if (inv_std) (*inv_std)[c] = is;
  }
  return out;
}

double sum_all(const DenseArray& a) { return simd::kernels().sum(a.data().data(), a.size()); }

DenseArray sum_over_rows(const DenseArray& a) {
  require_matrix(a, "sum_over_rows");
  DenseArray out = DenseArray::zeros({1, a.cols()});
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    kt.add(out.data().data(), a.row(i).data(), out.data().data(), a.cols());
  }
  return out;
}

DenseArray sum_over_cols(const DenseArray& a) {
  require_matrix(a, "sum_over_cols");
  DenseArray out = DenseArray::zeros({a.rows(), 1});
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = kt.sum(a.row(i).data(), a.cols());
  return out;
}

DenseArray gather_rows(const DenseArray& a, std::span<const std::size_t> idx) {
  require_matrix(a, "gather_rows");
  DenseArray out = DenseArray::zeros({idx.size(), a.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                       shape_string(a.shape()));
    }
    const auto src = a.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

DenseArray scatter_add_rows(const DenseArray& g, std::span<const std::size_t> idx,
                            std::size_t out_rows) {
  require_matrix(g, "scatter_add_rows");
  if (g.rows() != idx.size()) throw ShapeError("scatter_add_rows: index count mismatch");
  DenseArray out = DenseArray::zeros({out_rows, g.cols()});
  const auto& kt = simd::kernels();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= out_rows) throw ShapeError("scatter_add_rows: index out of range");
    double* dst = out.row(idx[r]).data();
    kt.add(dst, g.row(r).data(), dst, g.cols());
  }
  return out;
}

DenseArray concat_cols(const std::vector<const DenseArray*>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts.front()->rows();
  std::size_t total = 0;
  for (const DenseArray* p : parts) {
    require_matrix(*p, "concat_cols");
    if (p->rows() != n) mismatch("concat_cols", *parts.front(), *p);
    total += p->cols();
  }
  DenseArray out = DenseArray::zeros({n, total});
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = out.row(r).begin();
    for (const DenseArray* p : parts) {
      const auto src = p->row(r);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

DenseArray slice_cols(const DenseArray& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin > end || end > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  DenseArray out = DenseArray::zeros({a.rows(), end - begin});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto src = a.row(r).subspan(begin, end - begin);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

DenseArray neighbor_weighted_sum(const DenseArray& w, const DenseArray& v,
                                 std::span<const std::size_t> idx) {
  require_matrix(w, "neighbor_weighted_sum");
  require_matrix(v, "neighbor_weighted_sum");
  const std::size_t n = w.rows(), k = w.cols(), d = v.cols();
  if (idx.size() != n * k) {
    throw ShapeError("neighbor_weighted_sum: " + std::to_string(idx.size()) +
                     " indices for weights " + shape_string(w.shape()));
  }
  DenseArray out = DenseArray::zeros({n, d});
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.row(i).data();
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t j = idx[i * k + s];
      if (j >= v.rows()) throw ShapeError("neighbor_weighted_sum: index out of range");
      kt.axpy(w(i, s), v.row(j).data(), dst, d);
    }
  }
  return out;
}

double mean_row_sq_norm(const DenseArray& a) {
  require_matrix(a, "mean_row_sq_norm");
  if (a.rows() == 0) throw ShapeError("mean_row_sq_norm: no rows");
  const auto& kt = simd::kernels();
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    total += kt.dot(a.row(i).data(), a.row(i).data(), a.cols());
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace gma3d::numkern
