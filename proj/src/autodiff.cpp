#include "admp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace admp {

namespace {

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 operand, got " + shape_string(t.shape()));
  }
}

const Tape& same_tape(const char* op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": unbound operand");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

Tape& mutable_tape(Var a) {
  // Ops append to the tape that owns their operands; Var stores a const
  // pointer so that read-only holders cannot record by accident.
  return const_cast<Tape&>(*a.tape());
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  require_matrix(op, a);
  require_matrix(op, b);
  Shape out(2);
  for (std::size_t d = 0; d < 2; ++d) {
    const std::size_t x = a.shape()[d];
    const std::size_t y = b.shape()[d];
    if (x == y || y == 1) {
      out[d] = x;
    } else if (x == 1) {
      out[d] = y;
    } else {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) + " with " +
                       shape_string(b.shape()));
    }
  }
  return out;
}

// Index of the element of `t` that broadcasts onto output position (r, c).
inline std::size_t bidx(const Tensor& t, std::size_t r, std::size_t c) {
  const std::size_t rr = t.shape()[0] == 1 ? 0 : r;
  const std::size_t cc = t.shape()[1] == 1 ? 0 : c;
  return rr * t.shape()[1] + cc;
}

void check_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) {
    throw NumericError(op, std::string(op) + ": produced a non-finite value");
  }
}

template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  check_finite(op, out);
  const std::size_t in = a.id();
  return mutable_tape(a).record(op, std::move(out), {in},
                                [in, deriv](const Tape& tape, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  const Tensor& xv = tape.value(in);
                                  Tensor& gx = *grads[0];
                                  for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
                                });
}

}  // namespace

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("Var: not bound to a tape");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool tracked = false;
  for (std::size_t id : inputs) tracked = tracked || nodes_[id].requires_grad;
  nodes_.push_back(Node{op, std::move(value), std::move(inputs), tracked ? std::move(backward) : nullptr, tracked, false});
  return Var(this, nodes_.size() - 1);
}

GradientMap Tape::backward(Var output) const {
  if (output.tape() != this) throw std::invalid_argument("backward: output belongs to another tape");
  const Tensor& out = output.value();
  if (out.size() != 1) {
    throw ShapeError("backward: output must be a single value (reduce with sum or mean first), shape is " +
                     shape_string(out.shape()));
  }
  GradientMap result;
  if (!nodes_[output.id()].requires_grad) return result;

  std::vector<Tensor> grads(output.id() + 1);
  std::vector<bool> has(output.id() + 1, false);
  grads[output.id()] = Tensor(out.shape(), 1.0);
  has[output.id()] = true;

  std::vector<Tensor*> in_ptrs;
  for (std::size_t k = output.id() + 1; k-- > 0;) {
    if (!has[k]) continue;
    const Node& node = nodes_[k];
    if (node.is_leaf) {
      if (node.requires_grad) result.emplace(k, std::move(grads[k]));
      continue;
    }
    if (!node.backward) continue;
    in_ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (!has[in]) {
        grads[in] = Tensor::zeros_like(nodes_[in].value);
        has[in] = true;
      }
      in_ptrs[j] = &grads[in];
    }
    // An op may consume the same node twice (x * x); both slots alias one buffer.
    node.backward(*this, grads[k], in_ptrs);
    grads[k] = Tensor();
  }
  return result;
}

Var matmul(Var a, Var b) {
  Tape& tape = const_cast<Tape&>(same_tape("matmul", a, b));
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix("matmul", x);
  require_matrix("matmul", y);
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(x.shape()) + " x " +
                     shape_string(y.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      for (std::size_t j = 0; j < m; ++j) out(i, j) += xv * y(p, j);
    }
  }
  check_finite("matmul", out);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {ia, ib},
                     [ia, ib, n, k, m](const Tape& t, const Tensor& g, std::span<Tensor*> grads) {
                       const Tensor& xv = t.value(ia);
                       const Tensor& yv = t.value(ib);
                       if (grads[0]) {
                         Tensor& gx = *grads[0];
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < m; ++j) acc += g(i, j) * yv(p, j);
                             gx(i, p) += acc;
                           }
                       }
                       if (grads[1]) {
                         Tensor& gy = *grads[1];
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double xv_ip = xv(i, p);
                             for (std::size_t j = 0; j < m; ++j) gy(p, j) += xv_ip * g(i, j);
                           }
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = const_cast<Tape&>(same_tape("add", a, b));
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Shape shape = broadcast_shape("add", x, y);
  Tensor out(shape);
  for (std::size_t r = 0; r < shape[0]; ++r)
    for (std::size_t c = 0; c < shape[1]; ++c) out(r, c) = x[bidx(x, r, c)] + y[bidx(y, r, c)];
  check_finite("add", out);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("add", std::move(out), {ia, ib},
                     [ia, ib, shape](const Tape& t, const Tensor& g, std::span<Tensor*> grads) {
                       for (std::size_t s = 0; s < 2; ++s) {
                         if (!grads[s]) continue;
                         const Tensor& v = t.value(s == 0 ? ia : ib);
                         Tensor& gv = *grads[s];
                         for (std::size_t r = 0; r < shape[0]; ++r)
                           for (std::size_t c = 0; c < shape[1]; ++c) gv[bidx(v, r, c)] += g(r, c);
                       }
                     });
}

Var sub(Var a, Var b) { return add(a, neg(b)); }

Var mul(Var a, Var b) {
  Tape& tape = const_cast<Tape&>(same_tape("mul", a, b));
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Shape shape = broadcast_shape("mul", x, y);
  Tensor out(shape);
  for (std::size_t r = 0; r < shape[0]; ++r)
    for (std::size_t c = 0; c < shape[1]; ++c) out(r, c) = x[bidx(x, r, c)] * y[bidx(y, r, c)];
  check_finite("mul", out);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("mul", std::move(out), {ia, ib},
                     [ia, ib, shape](const Tape& t, const Tensor& g, std::span<Tensor*> grads) {
                       const Tensor& xv = t.value(ia);
                       const Tensor& yv = t.value(ib);
                       for (std::size_t r = 0; r < shape[0]; ++r)
                         for (std::size_t c = 0; c < shape[1]; ++c) {
                           const double gx = g(r, c) * yv[bidx(yv, r, c)];
                           const double gy = g(r, c) * xv[bidx(xv, r, c)];
                           if (grads[0]) (*grads[0])[bidx(xv, r, c)] += gx;
                           if (grads[1]) (*grads[1])[bidx(yv, r, c)] += gy;
                         }
                     });
}

Var neg(Var a) {
  return unary("neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log: argument must be positive, got " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](double x) {
    const double s = stable_sigmoid(x);
    return s * (1.0 - s);
  });
}

Var softplus(Var a) { return unary("softplus", a, stable_softplus, stable_sigmoid); }

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; }, [](double) { return 1.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  require_matrix("sum", x);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  check_finite("sum", out);
  const std::size_t in = a.id();
  return mutable_tape(a).record("sum", std::move(out), {in},
                                [](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  for (double& v : grads[0]->values()) v += g[0];
                                });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  require_matrix("mean", x);
  if (x.size() == 0) throw ShapeError("mean: empty operand");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double n = static_cast<double>(x.size());
  Tensor out = Tensor::scalar(acc / n);
  check_finite("mean", out);
  const std::size_t in = a.id();
  return mutable_tape(a).record("mean", std::move(out), {in},
                                [n](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  for (double& v : grads[0]->values()) v += g[0] / n;
                                });
}

Var sum_cols(Var a) {
  const Tensor& x = a.value();
  require_matrix("sum_cols", x);
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += x(i, j);
    out(i, 0) = acc;
  }
  check_finite("sum_cols", out);
  const std::size_t in = a.id();
  return mutable_tape(a).record("sum_cols", std::move(out), {in},
                                [n, m](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  Tensor& gx = *grads[0];
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t j = 0; j < m; ++j) gx(i, j) += g(i, 0);
                                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape("concat_cols", parts[0], p);
    const Tensor& v = p.value();
    require_matrix("concat_cols", v);
    if (v.rows() != n) {
      throw ShapeError("concat_cols: row counts differ, " + shape_string(parts[0].value().shape()) + " vs " +
                       shape_string(v.shape()));
    }
    ids.push_back(p.id());
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  return mutable_tape(parts[0]).record(
      "concat_cols", std::move(out), ids, [n, widths](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
        std::size_t off = 0;
        for (std::size_t s = 0; s < widths.size(); ++s) {
          if (grads[s]) {
            Tensor& gs = *grads[s];
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < widths[s]; ++j) gs(i, j) += g(i, off + j);
          }
          off += widths[s];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t m = parts[0].value().cols();
  std::vector<std::size_t> ids, heights;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape("concat_rows", parts[0], p);
    const Tensor& v = p.value();
    require_matrix("concat_rows", v);
    if (v.cols() != m) {
      throw ShapeError("concat_rows: column counts differ, " + shape_string(parts[0].value().shape()) + " vs " +
                       shape_string(v.shape()));
    }
    ids.push_back(p.id());
    heights.push_back(v.rows());
    total += v.rows();
  }
  std::vector<double> values;
  values.reserve(total * m);
  for (const Var& p : parts) values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  Tensor out({total, m}, std::move(values));
  return mutable_tape(parts[0]).record(
      "concat_rows", std::move(out), ids, [m, heights](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
        std::size_t off = 0;
        for (std::size_t s = 0; s < heights.size(); ++s) {
          if (grads[s]) {
            Tensor& gs = *grads[s];
            for (std::size_t k = 0; k < heights[s] * m; ++k) gs[k] += g[off + k];
          }
          off += heights[s] * m;
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix("slice_cols", x);
  if (begin > end || end > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for " + shape_string(x.shape()));
  }
  const std::size_t n = x.rows(), w = end - begin;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x(i, begin + j);
  const std::size_t in = a.id();
  return mutable_tape(a).record("slice_cols", std::move(out), {in},
                                [n, w, begin](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  Tensor& gx = *grads[0];
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t j = 0; j < w; ++j) gx(i, begin + j) += g(i, j);
                                });
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& x = a.value();
  require_matrix("repeat_rows", x);
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out({n * times, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t j = 0; j < m; ++j) out(i * times + t, j) = x(i, j);
  const std::size_t in = a.id();
  return mutable_tape(a).record("repeat_rows", std::move(out), {in},
                                [n, m, times](const Tape&, const Tensor& g, std::span<Tensor*> grads) {
                                  if (!grads[0]) return;
                                  Tensor& gx = *grads[0];
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t t = 0; t < times; ++t)
                                      for (std::size_t j = 0; j < m; ++j) gx(i, j) += g(i * times + t, j);
                                });
}

Var detach(Var a) {
  Tape& tape = mutable_tape(a);
  DetachLog* log = tape.detach_log();
  if (log && log->replay) {
    if (log->cursor >= log->values.size()) throw std::logic_error("detach: replay log exhausted");
    Tensor v = log->values[log->cursor++];
    if (v.shape() != a.value().shape()) throw ShapeError("detach: replayed value has a different shape");
    return tape.constant(std::move(v));
  }
  if (log) log->values.push_back(a.value());
  return tape.constant(a.value());
}

Var log_sigmoid(Var a) { return neg(softplus(neg(a))); }

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix("log_softmax_rows", x);
  Tensor shift({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    shift(i, 0) = mx;
  }
  // The shift is a constant: log-softmax is invariant to it.
  Var centered = sub(a, mutable_tape(a).constant(std::move(shift)));
  return sub(centered, log(sum_cols(exp(centered))));
}

}  // namespace admp
