// SPDX-License-Identifier: Apache-2.0
#include "lmpc/autodiff.hpp"

#include <cmath>
#include <string>

#include "lmpc/error.hpp"

namespace lmpc::ad {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false, false});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true, false});
  return {this, nodes_.size() - 1};
}

std::vector<Var> Tape::watch(const ParameterSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& t : params.values()) vars.push_back(variable(t));
  return vars;
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> parents,
                 Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
  bool needs = false;
  for (auto p : parents) needs = needs || nodes_[p].requires_grad;
  Node node{std::move(value), {}, {}, {}, needs, false};
  if (needs) {
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

std::vector<Tensor> Tape::gradient(Var loss, std::span<const Var> wrt) {
  if (loss.tape() != this) throw Error("gradient: loss was not recorded on this tape");
  if (loss.value().size() != 1) {
    throw ShapeError("gradient: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.has_grad = false;
  grad(loss.id()).fill(1.0);
  last_visits_ = 0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, id);
    ++last_visits_;
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    if (v.tape() == this && v.id() <= loss.id() && nodes_[v.id()].has_grad) {
      out.push_back(nodes_[v.id()].grad);
    } else {
      out.push_back(Tensor(v.value().shape()));
    }
  }
  return out;
}

namespace {

Tape& same_tape(const char* op, Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw Error(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
  }
  return true;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

bool needs(Tape& t, std::size_t id) { return t.requires_grad(id); }

// Elementwise binary op with suffix broadcasting. `f` computes the value,
// `dfa`/`dfb` the partial derivatives given (a, b, out).
template <class F, class DA, class DB>
Var binary(const char* op, Var va, Var vb, F f, DA dfa, DB dfb) {
  Tape& t = same_tape(op, va, vb);
  const Tensor& a = va.value();
  const Tensor& b = vb.value();
  Tensor out(broadcast_shape(op, a.shape(), b.shape()));
  const std::size_t n = out.size(), na = a.size(), nb = b.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i % na], b[i % nb]);
  std::size_t ia = va.id(), ib = vb.id();
  return t.record(op, std::move(out), {ia, ib}, [ia, ib, dfa, dfb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& a = tp.value(ia);
    const Tensor& b = tp.value(ib);
    const Tensor& o = tp.value(self);
    const std::size_t n = g.size(), na = a.size(), nb = b.size();
    if (needs(tp, ia)) {
      Tensor& ga = tp.grad(ia);
      for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * dfa(a[i % na], b[i % nb], o[i]);
    }
    if (needs(tp, ib)) {
      Tensor& gb = tp.grad(ib);
      for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * dfb(a[i % na], b[i % nb], o[i]);
    }
  });
}

// Elementwise unary op; `df` gets (x, out).
template <class F, class DF>
Var unary(const char* op, Var vx, F f, DF df) {
  Tape& t = *vx.tape();
  const Tensor& x = vx.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  std::size_t ix = vx.id();
  return t.record(op, std::move(out), {ix}, [ix, df](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ix);
    const Tensor& o = tp.value(self);
    Tensor& gx = tp.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], o[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var matmul(Var va, Var vb) {
  Tape& t = same_tape("matmul", va, vb);
  const Tensor& a = va.value();
  const Tensor& b = vb.value();
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  Tensor out(Shape{rows, cols});
  const double* __restrict ap = a.ptr();
  const double* __restrict bp = b.ptr();
  double* __restrict yp = out.ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    double* __restrict y = yp + r * cols;
    for (std::size_t i = 0; i < inner; ++i) {
      const double x = ap[r * inner + i];
      const double* __restrict w = bp + i * cols;
      for (std::size_t j = 0; j < cols; ++j) y[j] += x * w[j];
    }
  }
  std::size_t ia = va.id(), ib = vb.id();
  return t.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& a = tp.value(ia);
    const Tensor& b = tp.value(ib);
    const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    const double* __restrict gp = g.ptr();
    const double* __restrict ap = a.ptr();
    const double* __restrict bp = b.ptr();
    if (needs(tp, ia)) {
      // dA = G B^T, accumulated along B's rows so the inner loop is contiguous.
      std::vector<double> bt(cols * inner);
      for (std::size_t i = 0; i < inner; ++i) {
        for (std::size_t j = 0; j < cols; ++j) bt[j * inner + i] = bp[i * cols + j];
      }
      double* __restrict gap = tp.grad(ia).ptr();
      for (std::size_t r = 0; r < rows; ++r) {
        double* __restrict ga = gap + r * inner;
        for (std::size_t j = 0; j < cols; ++j) {
          const double gj = gp[r * cols + j];
          const double* __restrict btj = bt.data() + j * inner;
          for (std::size_t i = 0; i < inner; ++i) ga[i] += gj * btj[i];
        }
      }
    }
    if (needs(tp, ib)) {
      double* __restrict gbp = tp.grad(ib).ptr();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* __restrict gr = gp + r * cols;
        for (std::size_t i = 0; i < inner; ++i) {
          const double x = ap[r * inner + i];
          double* __restrict gw = gbp + i * cols;
          for (std::size_t j = 0; j < cols; ++j) gw[j] += x * gr[j];
        }
      }
    }
  });
}

Var neg(Var a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2 * x; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a, [](double x) { return ad::sigmoid(x); },
      [](double, double o) { return o * (1.0 - o); });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return ad::softplus(x); },
      [](double x, double) { return ad::sigmoid(x); });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var maximum(Var a, double c) {
  return unary(
      "maximum", a, [c](double x) { return x > c ? x : c; },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Var sum(Var va) {
  const Tensor& a = va.value();
  double s = 0.0;
  for (double x : a.data()) s += x;
  std::size_t ia = va.id();
  return va.tape()->record("sum", Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_last(Var va) {
  const Tensor& a = va.value();
  if (a.rank() == 0) throw ShapeError("sum_last: scalar input");
  Shape s(a.shape().begin(), a.shape().end() - 1);
  Tensor out(s);
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += a[r * cols + j];
    out[r] = acc;
  }
  std::size_t ia = va.id();
  return va.tape()->record("sum_last", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    const std::size_t cols = ga.cols();
    for (std::size_t r = 0; r < g.size(); ++r) {
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += g[r];
    }
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = *parts[0].tape();
  const Shape& first = parts[0].shape();
  if (first.empty()) throw ShapeError("concat: scalar input");
  Shape lead(first.begin(), first.end() - 1);
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error("concat: operands belong to different tapes");
    const Shape& s = p.shape();
    if (s.empty() || Shape(s.begin(), s.end() - 1) != lead) {
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " +
                       shape_str(s));
    }
    total += s.back();
    ids.push_back(p.id());
    widths.push_back(s.back());
  }
  Shape os = lead;
  os.push_back(total);
  Tensor out(os);
  const std::size_t rows = out.rows();
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * total + off + j] = v[r * widths[k] + j];
    }
    off += widths[k];
  }
  return t.record("concat", std::move(out), ids, [ids, widths](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const std::size_t total = g.cols(), rows = g.rows();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (needs(tp, ids[k])) {
        Tensor& gk = tp.grad(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

Var slice_last(Var va, std::size_t begin, std::size_t end) {
  const Tensor& a = va.value();
  if (a.rank() == 0 || begin >= end || end > a.cols()) {
    throw ShapeError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_str(a.shape()));
  }
  Shape s = a.shape();
  s.back() = end - begin;
  Tensor out(s);
  const std::size_t cols = a.cols(), w = end - begin, rows = a.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = a[r * cols + begin + j];
  }
  std::size_t ia = va.id();
  return va.tape()->record("slice_last", std::move(out), {ia},
                           [ia, begin, w](Tape& tp, std::size_t self) {
                             const Tensor& g = tp.grad(self);
                             Tensor& ga = tp.grad(ia);
                             const std::size_t cols = ga.cols(), rows = ga.rows();
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t j = 0; j < w; ++j) {
                                 ga[r * cols + begin + j] += g[r * w + j];
                               }
                             }
                           });
}

}  // namespace lmpc::ad
