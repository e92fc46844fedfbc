#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "admp/tensor.hpp"

namespace admp {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t id() const { return id_; }
  const Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }

 private:
  const Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// node id -> gradient of the output with respect to that node.
using GradientMap = std::unordered_map<std::size_t, Tensor>;

/// Captures the values produced by detach() so that a later evaluation on a
/// fresh tape can replay them. Finite-difference checks use this to hold
/// stop-gradient quantities at their base-point values.
struct DetachLog {
  std::vector<Tensor> values;
  bool replay = false;
  std::size_t cursor = 0;
};

/// The computation record. Operations are appended in execution order, so
/// every node's inputs precede it.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tape&, const Tensor& out_grad, std::span<Tensor*> in_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// A gradient-tracked input (parameter or reparametrization input).
  Var leaf(Tensor value);

  /// Reverse sweep from a single-element output. Returns gradients for every
  /// tracked leaf reachable from the output; unreachable leaves are absent.
  GradientMap backward(Var output) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  void set_detach_log(DetachLog* log) { detach_log_ = log; }
  DetachLog* detach_log() const { return detach_log_; }

  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  struct Node {
    const char* op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
    bool is_leaf;
  };
  std::deque<Node> nodes_;
  DetachLog* detach_log_ = nullptr;
};

// Primitive operations. All operands are rank-2 tensors; scalars are [1, 1].
// Binary elementwise ops broadcast any extent of 1 against the other operand.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var square(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Elementwise clamp; the gradient is zero where the input was clipped.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);       // -> [1, 1]
Var mean(Var a);      // -> [1, 1]
Var sum_cols(Var a);  // row sums -> [rows, 1]

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Repeats every row `times` times consecutively: row r lands at r*times..r*times+times-1.
Var repeat_rows(Var a, std::size_t times);

/// Stop-gradient. Honors the tape's DetachLog (record or replay).
Var detach(Var a);

/// log(sigmoid(a)) in a form that stays finite for large |a|.
Var log_sigmoid(Var a);
/// Row-wise log-softmax.
Var log_softmax_rows(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }

/// Numerically stable scalar helpers shared by forward code and oracles.
double stable_softplus(double x);
double stable_sigmoid(double x);

}  // namespace admp
