#pragma once

// Reverse-mode differentiation over a linear tape.
//
// Every traced op appends one node holding its forward value and closures
// that recompute it (replay) and propagate gradients (backward). Nodes only
// reference earlier nodes, so the tape is topologically ordered by
// construction.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"

namespace gma3d::numkern {

class Tape;
class Gradients;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const DenseArray& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

Gradients backward(const Tape& tape, Var output);

struct BackwardArgs {
  const DenseArray& grad_out;
  const DenseArray& out;
  const std::vector<const DenseArray*>& in;
  const std::vector<bool>& needs;
  // One slot per input; fill only where needs[i] is true.
  std::vector<DenseArray>& grad_in;
};

using ForwardFn = std::function<DenseArray(const std::vector<const DenseArray*>&)>;
using BackwardFn = std::function<void(const BackwardArgs&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(DenseArray value, bool requires_grad);
  Var parameter(DenseArray value) { return leaf(std::move(value), true); }
  Var constant(DenseArray value) { return leaf(std::move(value), false); }

  Var record(std::string_view op, const std::vector<Var>& inputs, ForwardFn forward,
             BackwardFn backward);

  const DenseArray& value(Var v) const;
  std::string_view op_name(Var v) const;
  bool requires_grad(Var v) const;
  bool owns(Var v) const noexcept { return v.tape() == this && v.id() < nodes_.size(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Overwrite a leaf; call replay() to refresh dependent nodes.
  void set_leaf_value(Var v, DenseArray value);

  // Recompute every op node from its inputs, in recording order.
  void replay();

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, Var output);

  struct Node {
    std::string op;
    DenseArray value;
    std::vector<std::size_t> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(Var v, const char* context) const;

  std::deque<Node> nodes_;
};

class Gradients {
 public:
  // Gradient with respect to v; zeros of v's shape if v does not influence
  // the output.
  DenseArray of(Var v) const;
  bool reached(Var v) const;

 private:
  friend Gradients backward(const Tape& tape, Var output);

  const Tape* tape_ = nullptr;
  std::vector<std::optional<DenseArray>> grads_;
};

// d(output)/d(node) for every node requiring gradients. `output` must be a
// 1×1 node recorded on `tape`.
Gradients backward(const Tape& tape, Var output);

// Traced counterparts of the eager ops.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var relu(Var a);
Var softplus(Var a);
Var softmax_rows(Var m);
Var row_normalize(Var m);
Var standardize_cols(Var a, double eps);
Var sum_all(Var a);
Var mean_row_sq_norm(Var a);
Var gather_rows(Var a, std::vector<std::size_t> idx);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(Var a, Shape shape);
Var neighbor_weighted_sum(Var w, Var v, std::vector<std::size_t> idx);
// y + alpha * g for a 1×1 alpha. When alpha is exactly zero the value is a
// copy of y, bit for bit.
Var add_scaled(Var y, Var alpha, Var g);

}  // namespace gma3d::numkern
