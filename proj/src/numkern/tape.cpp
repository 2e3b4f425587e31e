#include "gma3d/numkern/tape.hpp"

#include <memory>
#include <utility>

#include "gma3d/errors.hpp"
#include "gma3d/numkern/ops.hpp"
#include "gma3d/numkern/simd.hpp"

namespace gma3d::numkern {

const DenseArray& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::leaf(DenseArray value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* context) const {
  if (!owns(v)) throw UsageError(std::string(context) + ": variable is not on this tape");
}

Var Tape::record(std::string_view op, const std::vector<Var>& inputs, ForwardFn forward,
                 BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  std::vector<const DenseArray*> in;
  in.reserve(inputs.size());
  for (Var v : inputs) {
    check_owned(v, node.op.c_str());
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    in.push_back(&nodes_[v.id()].value);
  }
  node.value = forward(in);
  node.forward = std::move(forward);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const DenseArray& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value;
}

std::string_view Tape::op_name(Var v) const {
  check_owned(v, "op_name");
  return nodes_[v.id()].op;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

void Tape::set_leaf_value(Var v, DenseArray value) {
  check_owned(v, "set_leaf_value");
  Node& node = nodes_[v.id()];
  if (node.forward) throw UsageError("set_leaf_value: node is not a leaf");
  if (!node.value.same_shape(value)) {
    throw ShapeError("set_leaf_value: shape " + shape_string(value.shape()) + " replaces " +
                     shape_string(node.value.shape()));
  }
  node.value = std::move(value);
}

void Tape::replay() {
  std::vector<const DenseArray*> in;
  for (Node& node : nodes_) {
    if (!node.forward) continue;
    in.clear();
    for (std::size_t id : node.inputs) in.push_back(&nodes_[id].value);
    node.value = node.forward(in);
  }
}

DenseArray Gradients::of(Var v) const {
  if (!tape_ || !tape_->owns(v)) throw UsageError("Gradients::of: variable is not on this tape");
  const auto& g = grads_[v.id()];
  if (g) return *g;
  return DenseArray::zeros(tape_->value(v).shape());
}

bool Gradients::reached(Var v) const {
  return tape_ && tape_->owns(v) && grads_[v.id()].has_value();
}

Gradients backward(const Tape& tape, Var output) {
  if (!tape.owns(output)) throw UsageError("backward: output is not on this tape");
  if (tape.value(output).size() != 1) {
    throw UsageError("backward: output must be a scalar, got " +
                     shape_string(tape.value(output).shape()));
  }
  Gradients result;
  result.tape_ = &tape;
  result.grads_.resize(tape.nodes_.size());
  result.grads_[output.id()] = DenseArray::filled(tape.value(output).shape(), 1.0);

  const auto& kt = simd::kernels();
  std::vector<const DenseArray*> in;
  std::vector<bool> needs;
  std::vector<DenseArray> grad_in;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const auto& node = tape.nodes_[id];
    if (!node.forward || !node.requires_grad || !result.grads_[id]) continue;
    in.clear();
    needs.clear();
    for (std::size_t src : node.inputs) {
      in.push_back(&tape.nodes_[src].value);
      needs.push_back(tape.nodes_[src].requires_grad);
    }
    grad_in.assign(node.inputs.size(), DenseArray());
    node.backward(BackwardArgs{*result.grads_[id], node.value, in, needs, grad_in});
    for (std::size_t s = 0; s < node.inputs.size(); ++s) {
      if (!needs[s]) continue;
      const std::size_t src = node.inputs[s];
      DenseArray& contribution = grad_in[s];
      if (!contribution.same_shape(tape.nodes_[src].value)) {
        throw UsageError("backward: op '" + node.op + "' produced gradient of shape " +
                         shape_string(contribution.shape()) + " for input of shape " +
                         shape_string(tape.nodes_[src].value.shape()));
      }
      auto& acc = result.grads_[src];
      if (!acc) {
        acc = std::move(contribution);
      } else {
        kt.add(acc->data().data(), contribution.data().data(), acc->data().data(), acc->size());
      }
    }
  }
  return result;
}

namespace {

Tape& tape_of(std::initializer_list<Var> vars, const char* op) {
  Tape* t = nullptr;
  for (Var v : vars) {
    if (!v.valid()) throw UsageError(std::string(op) + ": unbound variable");
    if (t && v.tape() != t) throw UsageError(std::string(op) + ": variables on different tapes");
    t = v.tape();
  }
  return *t;
}

// dX for y = softmax(x) or y = x / rowsum(x): (G - rowdot(G, y)) scaled per row.
DenseArray row_simplex_backward(const DenseArray& g, const DenseArray& y,
                                const std::vector<double>* row_scale) {
  DenseArray dx = DenseArray::zeros(g.shape());
  const auto& kt = simd::kernels();
  const std::size_t c = g.cols();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double inner = kt.dot(g.row(i).data(), y.row(i).data(), c);
    auto out = dx.row(i);
    const auto gr = g.row(i);
    const auto yr = y.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const double centered = gr[j] - inner;
      out[j] = row_scale ? centered * (*row_scale)[i] : yr[j] * centered;
    }
  }
  return dx;
}

}  // namespace

Var matmul(Var a, Var b) {
  return tape_of({a, b}, "matmul")
      .record(
          "matmul", {a, b}, [](const auto& in) { return matmul(*in[0], *in[1]); },
          [](const BackwardArgs& g) {
            if (g.needs[0]) g.grad_in[0] = matmul_nt(g.grad_out, *g.in[1]);
            if (g.needs[1]) g.grad_in[1] = matmul_tn(*g.in[0], g.grad_out);
          });
}

Var matmul_nt(Var a, Var b) {
  return tape_of({a, b}, "matmul_nt")
      .record(
          "matmul_nt", {a, b}, [](const auto& in) { return matmul_nt(*in[0], *in[1]); },
          [](const BackwardArgs& g) {
            if (g.needs[0]) g.grad_in[0] = matmul(g.grad_out, *g.in[1]);
            if (g.needs[1]) g.grad_in[1] = matmul_tn(g.grad_out, *g.in[0]);
          });
}

Var add(Var a, Var b) {
  return tape_of({a, b}, "add").record(
      "add", {a, b}, [](const auto& in) { return add(*in[0], *in[1]); },
      [](const BackwardArgs& g) {
        if (g.needs[0]) g.grad_in[0] = g.grad_out;
        if (g.needs[1]) g.grad_in[1] = g.grad_out;
      });
}

Var sub(Var a, Var b) {
  return tape_of({a, b}, "sub").record(
      "sub", {a, b}, [](const auto& in) { return sub(*in[0], *in[1]); },
      [](const BackwardArgs& g) {
        if (g.needs[0]) g.grad_in[0] = g.grad_out;
        if (g.needs[1]) g.grad_in[1] = scale(g.grad_out, -1.0);
      });
}

Var mul(Var a, Var b) {
  return tape_of({a, b}, "mul").record(
      "mul", {a, b}, [](const auto& in) { return mul(*in[0], *in[1]); },
      [](const BackwardArgs& g) {
        if (g.needs[0]) g.grad_in[0] = mul(g.grad_out, *g.in[1]);
        if (g.needs[1]) g.grad_in[1] = mul(g.grad_out, *g.in[0]);
      });
}

Var scale(Var a, double s) {
  return tape_of({a}, "scale").record(
      "scale", {a}, [s](const auto& in) { return scale(*in[0], s); },
      [s](const BackwardArgs& g) { g.grad_in[0] = scale(g.grad_out, s); });
}

Var add_row(Var a, Var row) {
  return tape_of({a, row}, "add_row")
      .record(
          "add_row", {a, row}, [](const auto& in) { return add_row(*in[0], *in[1]); },
          [](const BackwardArgs& g) {
            if (g.needs[0]) g.grad_in[0] = g.grad_out;
            if (g.needs[1]) g.grad_in[1] = sum_over_rows(g.grad_out).reshaped(g.in[1]->shape());
          });
}

Var mul_row(Var a, Var row) {
  return tape_of({a, row}, "mul_row")
      .record(
          "mul_row", {a, row}, [](const auto& in) { return mul_row(*in[0], *in[1]); },
          [](const BackwardArgs& g) {
            if (g.needs[0]) g.grad_in[0] = mul_row(g.grad_out, *g.in[1]);
            if (g.needs[1]) {
              g.grad_in[1] = sum_over_rows(mul(g.grad_out, *g.in[0])).reshaped(g.in[1]->shape());
            }
          });
}

Var relu(Var a) {
  return tape_of({a}, "relu").record(
      "relu", {a}, [](const auto& in) { return relu(*in[0]); },
      [](const BackwardArgs& g) {
        DenseArray dx = DenseArray::zeros(g.grad_out.shape());
        const DenseArray& x = *g.in[0];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? g.grad_out[i] : 0.0;
        g.grad_in[0] = std::move(dx);
      });
}

Var softplus(Var a) {
  return tape_of({a}, "softplus")
      .record(
          "softplus", {a}, [](const auto& in) { return softplus(*in[0]); },
          [](const BackwardArgs& g) { g.grad_in[0] = mul(g.grad_out, sigmoid(*g.in[0])); });
}

Var softmax_rows(Var m) {
  return tape_of({m}, "softmax_rows")
      .record(
          "softmax_rows", {m}, [](const auto& in) { return softmax_rows(*in[0]); },
          [](const BackwardArgs& g) {
            g.grad_in[0] = row_simplex_backward(g.grad_out, g.out, nullptr);
          });
}

Var row_normalize(Var m) {
  return tape_of({m}, "row_normalize")
      .record(
          "row_normalize", {m}, [](const auto& in) { return row_normalize(*in[0]); },
          [](const BackwardArgs& g) {
            const DenseArray sums = sum_over_cols(*g.in[0]);
            std::vector<double> inv(sums.size());
            for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / sums[i];
            g.grad_in[0] = row_simplex_backward(g.grad_out, g.out, &inv);
          });
}

Var standardize_cols(Var a, double eps) {
  return tape_of({a}, "standardize_cols")
      .record(
          "standardize_cols", {a},
          [eps](const auto& in) { return standardize_cols(*in[0], eps); },
          [eps](const BackwardArgs& g) {
            // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat)), per column.
            std::vector<double> inv_std;
            const DenseArray xhat = standardize_cols(*g.in[0], eps, &inv_std);
            const std::size_t n = xhat.rows(), d = xhat.cols();
            const DenseArray g_mean = sum_over_rows(g.grad_out);
            const DenseArray gx_mean = sum_over_rows(mul(g.grad_out, xhat));
            DenseArray dx = DenseArray::zeros(xhat.shape());
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r) {
              for (std::size_t c = 0; c < d; ++c) {
                dx(r, c) = inv_std[c] *
                           (g.grad_out(r, c) - g_mean[c] * inv_n - xhat(r, c) * (gx_mean[c] * inv_n));
              }
            }
            g.grad_in[0] = std::move(dx);
          });
}

Var sum_all(Var a) {
  return tape_of({a}, "sum_all")
      .record(
          "sum_all", {a}, [](const auto& in) { return DenseArray::scalar(sum_all(*in[0])); },
          [](const BackwardArgs& g) {
            g.grad_in[0] = DenseArray::filled(g.in[0]->shape(), g.grad_out.item());
          });
}

Var mean_row_sq_norm(Var a) {
  return tape_of({a}, "mean_row_sq_norm")
      .record(
          "mean_row_sq_norm", {a},
          [](const auto& in) { return DenseArray::scalar(mean_row_sq_norm(*in[0])); },
          [](const BackwardArgs& g) {
            const double s = 2.0 * g.grad_out.item() / static_cast<double>(g.in[0]->rows());
            g.grad_in[0] = scale(*g.in[0], s);
          });
}

Var gather_rows(Var a, std::vector<std::size_t> idx) {
  auto shared = std::make_shared<const std::vector<std::size_t>>(std::move(idx));
  return tape_of({a}, "gather_rows")
      .record(
          "gather_rows", {a}, [shared](const auto& in) { return gather_rows(*in[0], *shared); },
          [shared](const BackwardArgs& g) {
            g.grad_in[0] = scatter_add_rows(g.grad_out, *shared, g.in[0]->rows());
          });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape* t = parts.front().tape();
  if (!t) throw UsageError("concat_cols: unbound variable");
  return t->record(
      "concat_cols", parts, [](const auto& in) { return concat_cols(in); },
      [](const BackwardArgs& g) {
        std::size_t begin = 0;
        for (std::size_t s = 0; s < g.in.size(); ++s) {
          const std::size_t end = begin + g.in[s]->cols();
          if (g.needs[s]) g.grad_in[s] = slice_cols(g.grad_out, begin, end);
          begin = end;
        }
      });
}

Var reshape(Var a, Shape shape) {
  return tape_of({a}, "reshape")
      .record(
          "reshape", {a}, [shape](const auto& in) { return in[0]->reshaped(shape); },
          [](const BackwardArgs& g) { g.grad_in[0] = g.grad_out.reshaped(g.in[0]->shape()); });
}

Var neighbor_weighted_sum(Var w, Var v, std::vector<std::size_t> idx) {
  auto shared = std::make_shared<const std::vector<std::size_t>>(std::move(idx));
  return tape_of({w, v}, "neighbor_weighted_sum")
      .record(
          "neighbor_weighted_sum", {w, v},
          [shared](const auto& in) { return neighbor_weighted_sum(*in[0], *in[1], *shared); },
          [shared](const BackwardArgs& g) {
            const DenseArray& wv = *g.in[0];
            const DenseArray& vv = *g.in[1];
            const std::size_t n = wv.rows(), k = wv.cols(), d = vv.cols();
            const auto& kt = simd::kernels();
            if (g.needs[0]) {
              DenseArray dw = DenseArray::zeros(wv.shape());
              for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t s = 0; s < k; ++s) {
                  dw(i, s) = kt.dot(g.grad_out.row(i).data(), vv.row((*shared)[i * k + s]).data(), d);
                }
              }
              g.grad_in[0] = std::move(dw);
            }
            if (g.needs[1]) {
              DenseArray dv = DenseArray::zeros(vv.shape());
              for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t s = 0; s < k; ++s) {
                  kt.axpy(wv(i, s), g.grad_out.row(i).data(),
                          dv.row((*shared)[i * k + s]).data(), d);
                }
              }
              g.grad_in[1] = std::move(dv);
            }
          });
}

Var add_scaled(Var y, Var alpha, Var g_var) {
  return tape_of({y, alpha, g_var}, "add_scaled")
      .record(
          "add_scaled", {y, alpha, g_var},
          [](const auto& in) {
            const double a = in[1]->item();
            if (a == 0.0) {
              if (!in[0]->same_shape(*in[2])) throw ShapeError("add_scaled: shape mismatch");
              return *in[0];
            }
            return add(*in[0], scale(*in[2], a));
          },
          [](const BackwardArgs& g) {
            if (g.needs[0]) g.grad_in[0] = g.grad_out;
            if (g.needs[1]) {
              g.grad_in[1] = DenseArray::scalar(sum_all(mul(g.grad_out, *g.in[2])))
                                 .reshaped(g.in[1]->shape());
            }
            if (g.needs[2]) g.grad_in[2] = scale(g.grad_out, g.in[1]->item());
          });
}

}  // namespace gma3d::numkern
