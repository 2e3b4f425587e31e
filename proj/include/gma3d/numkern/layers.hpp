#pragma once

// Small neural layers shared by the aggregation module and the trainer.
// Parameter structs are templated on the tensor type so the same layout
// serves both stored weights (DenseArray) and weights bound to a tape (Var).

#include <cstddef>
#include <string>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"
#include "gma3d/numkern/tape.hpp"

namespace gma3d::numkern {

inline constexpr double kNormEpsilon = 1e-5;

// y = x · weight + bias; weight is in×out, bias 1×out.
template <class T>
struct Linear {
  T weight;
  T bias;
};

// Affine layers with ReLU between them and identity after the last.
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;
};

// Linear map, per-feature standardization over the rows of one cloud,
// learnable per-feature scale and shift, then ReLU.
template <class T>
struct NormActHead {
  Linear<T> linear;
  T scale;
  T shift;
};

using LinearParams = Linear<DenseArray>;
using MlpParams = Mlp<DenseArray>;
using NormActHeadParams = NormActHead<DenseArray>;

// Zero-initialized MLP with the given layer widths (dims.size() >= 2).
MlpParams zero_mlp(const std::vector<std::size_t>& dims);
// Identity linear map, zero shift, unit scale.
NormActHeadParams identity_head(std::size_t dim);

// Throws ShapeError if consecutive layers do not chain.
void validate(const MlpParams& p);
void validate(const NormActHeadParams& p);

std::size_t in_dim(const MlpParams& p);
std::size_t out_dim(const MlpParams& p);

DenseArray linear_forward(const LinearParams& p, const DenseArray& x);
DenseArray mlp_forward(const MlpParams& p, const DenseArray& x);
// Requires x.rows() >= 2; throws PreconditionError otherwise.
DenseArray norm_act_head(const NormActHeadParams& p, const DenseArray& x,
                         double eps = kNormEpsilon);

Var linear_forward(const Linear<Var>& p, Var x);
Var mlp_forward(const Mlp<Var>& p, Var x);
Var norm_act_head(const NormActHead<Var>& p, Var x, double eps = kNormEpsilon);

// Visit every tensor with a dotted name, e.g. "enc.0.weight".
template <class L, class F>
void visit_linear(L& l, const std::string& prefix, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <class M, class F>
void visit_mlp(M& m, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    visit_linear(m.layers[i], prefix + "." + std::to_string(i), f);
  }
}

template <class H, class F>
void visit_head(H& h, const std::string& prefix, F&& f) {
  visit_linear(h.linear, prefix + ".linear", f);
  f(prefix + ".scale", h.scale);
  f(prefix + ".shift", h.shift);
}

// Bind stored weights to tape leaves.
Linear<Var> bind(Tape& tape, const LinearParams& p, bool trainable);
Mlp<Var> bind(Tape& tape, const MlpParams& p, bool trainable);
NormActHead<Var> bind(Tape& tape, const NormActHeadParams& p, bool trainable);

}  // namespace gma3d::numkern
