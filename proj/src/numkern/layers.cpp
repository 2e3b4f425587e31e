#include "gma3d/numkern/layers.hpp"

#include "gma3d/errors.hpp"
#include "gma3d/numkern/ops.hpp"

namespace gma3d::numkern {
namespace {

void validate_linear(const LinearParams& l, const std::string& where) {
  if (l.weight.rank() != 2 || l.bias.size() != l.weight.cols()) {
    throw ShapeError(where + ": weight " + shape_string(l.weight.shape()) + " with bias " +
                     shape_string(l.bias.shape()));
  }
}

}  // namespace

MlpParams zero_mlp(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ShapeError("zero_mlp: need at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.layers.push_back({DenseArray::zeros({dims[i], dims[i + 1]}),
                        DenseArray::zeros({1, dims[i + 1]})});
  }
  return p;
}

NormActHeadParams identity_head(std::size_t dim) {
  return {{DenseArray::identity(dim), DenseArray::zeros({1, dim})},
          DenseArray::filled({1, dim}, 1.0),
          DenseArray::zeros({1, dim})};
}

void validate(const MlpParams& p) {
  if (p.layers.empty()) throw ShapeError("mlp: no layers");
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    validate_linear(p.layers[i], "mlp layer " + std::to_string(i));
    if (i > 0 && p.layers[i - 1].weight.cols() != p.layers[i].weight.rows()) {
      throw ShapeError("mlp: layer " + std::to_string(i - 1) + " outputs " +
                       std::to_string(p.layers[i - 1].weight.cols()) + " but layer " +
                       std::to_string(i) + " expects " + std::to_string(p.layers[i].weight.rows()));
    }
  }
}

void validate(const NormActHeadParams& p) {
  validate_linear(p.linear, "norm_act_head linear");
  const std::size_t d = p.linear.weight.cols();
  if (p.scale.size() != d || p.shift.size() != d) {
    throw ShapeError("norm_act_head: scale/shift width does not match " + std::to_string(d));
  }
}

std::size_t in_dim(const MlpParams& p) { return p.layers.front().weight.rows(); }
std::size_t out_dim(const MlpParams& p) { return p.layers.back().weight.cols(); }

DenseArray linear_forward(const LinearParams& p, const DenseArray& x) {
  return add_row(matmul(x, p.weight), p.bias);
}

DenseArray mlp_forward(const MlpParams& p, const DenseArray& x) {
  validate(p);
  DenseArray h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    h = linear_forward(p.layers[i], h);
    if (i + 1 < p.layers.size()) h = relu(h);
  }
  return h;
}

DenseArray norm_act_head(const NormActHeadParams& p, const DenseArray& x, double eps) {
  validate(p);
  if (x.rows() < 2) {
    throw PreconditionError("norm_act_head: needs at least 2 points, got " +
                            std::to_string(x.rows()));
  }
  const DenseArray z = standardize_cols(linear_forward(p.linear, x), eps);
  return relu(add_row(mul_row(z, p.scale), p.shift));
}

Var linear_forward(const Linear<Var>& p, Var x) {
  return add_row(matmul(x, p.weight), p.bias);
}

Var mlp_forward(const Mlp<Var>& p, Var x) {
  if (p.layers.empty()) throw ShapeError("mlp: no layers");
  Var h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    h = linear_forward(p.layers[i], h);
    if (i + 1 < p.layers.size()) h = relu(h);
  }
  return h;
}

Var norm_act_head(const NormActHead<Var>& p, Var x, double eps) {
  if (x.value().rows() < 2) {
    throw PreconditionError("norm_act_head: needs at least 2 points, got " +
                            std::to_string(x.value().rows()));
  }
  const Var z = standardize_cols(linear_forward(p.linear, x), eps);
  return relu(add_row(mul_row(z, p.scale), p.shift));
}

Linear<Var> bind(Tape& tape, const LinearParams& p, bool trainable) {
  return {tape.leaf(p.weight, trainable), tape.leaf(p.bias, trainable)};
}

Mlp<Var> bind(Tape& tape, const MlpParams& p, bool trainable) {
  validate(p);
  Mlp<Var> out;
  for (const auto& l : p.layers) out.layers.push_back(bind(tape, l, trainable));
  return out;
}

NormActHead<Var> bind(Tape& tape, const NormActHeadParams& p, bool trainable) {
  validate(p);
  return {bind(tape, p.linear, trainable), tape.leaf(p.scale, trainable),
          tape.leaf(p.shift, trainable)};
}

}  // namespace gma3d::numkern
