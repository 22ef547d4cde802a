// Copyright 2026 The cmsclr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cmsclr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cmsclr/error.hpp"

namespace cmsclr {

using NodePtr = std::shared_ptr<detail::TensorNode>;

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(Shape shape, std::vector<double> values,
                         std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (recording_) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  return Tensor(std::move(node));
}

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  if (!recording_ || !output.requires_grad()) return;
  if (consumed_) {
    throw UsageError("tape already replayed; call reset() before recording");
  }
  entries_.push_back({output.node(), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw UsageError("backward() called twice on the same tape without reset");
  }
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("loss is not connected to any requires_grad tensor");
  }
  consumed_ = true;
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward_fn();
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

namespace ag {
namespace {

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": cannot broadcast " +
                   shape_str(a.shape()) + " with " + shape_str(b.shape()));
}

// Unary op whose backward multiplies the upstream gradient by dfdx(x, y).
template <typename F, typename D>
Tensor unary(Tape& tape, const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, dfdx] {
    if (!xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    const auto& g = yn->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * dfdx(xn->value[i], yn->value[i]);
    }
  });
  return y;
}

// C[m×n] (+)= A[m×k]·B[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k]·B[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ·B[k×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_mask_value(double m) {
  if (m != 0.0 && m != 1.0) {
    throw DomainError("mask entries must be 0 or 1, got " + std::to_string(m));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "add");
  const std::size_t n = numel_of(shape), na = a.numel(), nb = b.numel();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] + bv[i % nb];
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&a, &b});
  NodePtr an = a.node(), bn = b.node(), yn = y.node();
  tape.record(y, [an, bn, yn] {
    const auto& g = yn->grad;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i % ga.size()] += g[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % gb.size()] += g[i];
    }
  });
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "sub");
  const std::size_t n = numel_of(shape), na = a.numel(), nb = b.numel();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] - bv[i % nb];
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&a, &b});
  NodePtr an = a.node(), bn = b.node(), yn = y.node();
  tape.record(y, [an, bn, yn] {
    const auto& g = yn->grad;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i % ga.size()] += g[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % gb.size()] -= g[i];
    }
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "mul");
  const std::size_t n = numel_of(shape), na = a.numel(), nb = b.numel();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] * bv[i % nb];
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&a, &b});
  NodePtr an = a.node(), bn = b.node(), yn = y.node();
  tape.record(y, [an, bn, yn] {
    const auto& g = yn->grad;
    const std::size_t na = an->value.size(), nb = bn->value.size();
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i % na] += g[i] * bn->value[i % nb];
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i % nb] += g[i] * an->value[i % na];
      }
    }
  });
  return y;
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "div");
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: zero divisor");
  }
  const std::size_t n = numel_of(shape), na = a.numel(), nb = b.numel();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] / bv[i % nb];
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&a, &b});
  NodePtr an = a.node(), bn = b.node(), yn = y.node();
  tape.record(y, [an, bn, yn] {
    const auto& g = yn->grad;
    const std::size_t na = an->value.size(), nb = bn->value.size();
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i % na] += g[i] / bn->value[i % nb];
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = bn->value[i % nb];
        gb[i % nb] -= g[i] * an->value[i % na] / (d * d);
      }
    }
  });
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v < 0.0 ? 0.0 : v; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive operand " + std::to_string(v));
    }
  }
  return unary(
      tape, x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

// ---------------------------------------------------------------------------
// Products

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: dimension mismatch between " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return linear(tape, a, b);
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: dimension mismatch between " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1), m = x.numel() / k;
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<double> out(m * n, 0.0);
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&x, &w});
  NodePtr xn = x.node(), wn = w.node(), yn = y.node();
  tape.record(y, [xn, wn, yn, m, k, n] {
    const double* g = yn->grad.data();
    if (xn->requires_grad) {
      gemm_nt(g, wn->value.data(), xn->ensure_grad().data(), m, n, k);
    }
    if (wn->requires_grad) {
      gemm_tn(xn->value.data(), g, wn->ensure_grad().data(), k, m, n);
    }
  });
  return y;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& w,
              const Tensor& bias) {
  if (bias.rank() != 1 || w.rank() != 2 || bias.dim(0) != w.dim(1)) {
    throw ShapeError("affine: bias " + shape_str(bias.shape()) +
                     " does not match weight " + shape_str(w.shape()));
  }
  return add(tape, linear(tape, x, w), bias);
}

Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b) {
  const bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                  a.dim(2) == (transpose_b ? b.dim(2) : b.dim(1));
  if (!ok) {
    throw ShapeError("bmm: dimension mismatch between " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     (transpose_b ? " (transposed)" : ""));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    const double* ap = a.data().data() + s * m * k;
    const double* bp = b.data().data() + s * k * n;
    double* cp = out.data() + s * m * n;
    if (transpose_b) {
      gemm_nt(ap, bp, cp, m, k, n);
    } else {
      gemm_nn(ap, bp, cp, m, k, n);
    }
  }
  Tensor y = tape.make_output({batch, m, n}, std::move(out), {&a, &b});
  NodePtr an = a.node(), bn = b.node(), yn = y.node();
  tape.record(y, [an, bn, yn, batch, m, k, n, transpose_b] {
    for (std::size_t s = 0; s < batch; ++s) {
      const double* g = yn->grad.data() + s * m * n;
      const double* ap = an->value.data() + s * m * k;
      const double* bp = bn->value.data() + s * k * n;
      if (an->requires_grad) {
        double* ga = an->ensure_grad().data() + s * m * k;
        if (transpose_b) {
          gemm_nn(g, bp, ga, m, n, k);  // dA = G·B, B is [n×k]
        } else {
          gemm_nt(g, bp, ga, m, n, k);  // dA = G·Bᵀ, B is [k×n]
        }
      }
      if (bn->requires_grad) {
        double* gb = bn->ensure_grad().data() + s * k * n;
        if (transpose_b) {
          gemm_tn(g, ap, gb, n, m, k);  // dB = Gᵀ·A -> [n×k]
        } else {
          gemm_tn(ap, g, gb, k, m, n);  // dB = Aᵀ·G -> [k×n]
        }
      }
    }
  });
  return y;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError("transpose: expected a matrix, got " +
                     shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  Tensor y = tape.make_output({n, m}, std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, m, n] {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += yn->grad[j * m + i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn] {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i];
  });
  return y;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t i = 0; ok && i < first.size(); ++i) {
      if (i != axis && p.dim(i) != first[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: " + shape_str(p.shape()) +
                       " does not agree with " + shape_str(first) +
                       " off axis " + std::to_string(axis));
    }
    shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_at(shape, axis, "concat");
  std::vector<double> out(numel_of(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t plen = p.dim(axis);
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * plen * s.inner, plen * s.inner,
                  out.data() + (o * s.len + offset) * s.inner);
    }
    offset += plen;
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(out);
  for (const Tensor& p : parts) {
    if (tape.recording() && p.requires_grad()) node->requires_grad = true;
  }
  Tensor y(node);
  std::vector<NodePtr> inputs;
  for (const Tensor& p : parts) inputs.push_back(p.node());
  tape.record(y, [inputs, offsets, node, s, axis] {
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
      const NodePtr& in = inputs[idx];
      if (!in->requires_grad) continue;
      const std::size_t plen = in->shape[axis];
      auto& gin = in->ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src =
            node->grad.data() + (o * s.len + offsets[idx]) * s.inner;
        double* dst = gin.data() + o * plen * s.inner;
        for (std::size_t i = 0; i < plen * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
  return y;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const AxisSplit s = split_at(x.shape(), axis, "slice");
  if (length == 0 || start + length > s.len) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of range for " +
                     shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(numel_of(shape));
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.len + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, s, start, length] {
    auto& gx = xn->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = yn->grad.data() + o * length * s.inner;
      double* dst = gx.data() + (o * s.len + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw ShapeError("gather_rows: table must be a matrix, got " +
                     shape_str(table.shape()));
  }
  const std::size_t rows = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw DataError("id " + std::to_string(ids[i]) + " at index " +
                      std::to_string(i) + " is out of range [0, " +
                      std::to_string(rows) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  Tensor y = tape.make_output({ids.size(), d}, std::move(out), {&table});
  NodePtr tn = table.node(), yn = y.node();
  std::vector<int> id_copy(ids.begin(), ids.end());
  tape.record(y, [tn, yn, id_copy, d] {
    auto& gt = tn->ensure_grad();
    for (std::size_t i = 0; i < id_copy.size(); ++i) {
      double* dst = gt.data() + static_cast<std::size_t>(id_copy[i]) * d;
      const double* src = yn->grad.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "softmax");
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) {
        if (!(xv[base + k * s.inner] <= mx)) mx = xv[base + k * s.inner];
      }
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= total;
    }
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, s] {
    auto& gx = xn->ensure_grad();
    const auto& g = yn->grad;
    const auto& yv = yn->value;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) {
          dot += g[base + k * s.inner] * yv[base + k * s.inner];
        }
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t i = base + k * s.inner;
          gx[i] += yv[i] * (g[i] - dot);
        }
      }
    }
  });
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis, "log_softmax");
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) {
        if (!(xv[base + k * s.inner] <= mx)) mx = xv[base + k * s.inner];
      }
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        total += std::exp(xv[base + k * s.inner] - mx);
      }
      const double lse = mx + std::log(total);
      for (std::size_t k = 0; k < s.len; ++k) {
        out[base + k * s.inner] = xv[base + k * s.inner] - lse;
      }
    }
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, s] {
    auto& gx = xn->ensure_grad();
    const auto& g = yn->grad;
    const auto& yv = yn->value;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double gsum = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) gsum += g[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t i = base + k * s.inner;
          gx[i] += g[i] - std::exp(yv[i]) * gsum;
        }
      }
    }
  });
  return y;
}

Tensor masked_softmax(Tape& tape, const Tensor& x, const Tensor& key_mask) {
  if (x.rank() != 3 || key_mask.rank() != 2 ||
      key_mask.dim(1) != x.dim(2) || x.dim(0) % key_mask.dim(0) != 0) {
    throw ShapeError("masked_softmax: scores " + shape_str(x.shape()) +
                     " incompatible with key mask " +
                     shape_str(key_mask.shape()));
  }
  const std::size_t batch = x.dim(0), rows = x.dim(1), keys = x.dim(2);
  const std::size_t group = batch / key_mask.dim(0);
  auto mv = key_mask.data();
  for (double m : mv) check_mask_value(m);
  std::vector<double> out(x.numel(), 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* mrow = mv.data() + (b / group) * keys;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = (b * rows + r) * keys;
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t k = 0; k < keys; ++k) {
        if (mrow[k] == 0.0) continue;
        any = true;
        // NaN wins so it reaches the loss
        if (std::isnan(xv[base + k]) || xv[base + k] > mx) mx = xv[base + k];
      }
      if (!any) {
        throw DegenerateInputError("masked_softmax: every key is masked");
      }
      double total = 0.0;
      for (std::size_t k = 0; k < keys; ++k) {
        if (mrow[k] == 0.0) continue;
        const double e = std::exp(xv[base + k] - mx);
        out[base + k] = e;
        total += e;
      }
      for (std::size_t k = 0; k < keys; ++k) out[base + k] /= total;
    }
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, batch, rows, keys] {
    auto& gx = xn->ensure_grad();
    const auto& g = yn->grad;
    const auto& yv = yn->value;
    for (std::size_t r = 0; r < batch * rows; ++r) {
      const std::size_t base = r * keys;
      double dot = 0.0;
      for (std::size_t k = 0; k < keys; ++k) dot += g[base + k] * yv[base + k];
      for (std::size_t k = 0; k < keys; ++k) {
        gx[base + k] += yv[base + k] * (g[base + k] - dot);
      }
    }
  });
  return y;
}

Tensor masked_mean(Tape& tape, const Tensor& x, const Tensor& mask) {
  const bool single = x.rank() == 2 && mask.rank() == 1 &&
                      mask.dim(0) == x.dim(0);
  const bool batched = x.rank() == 3 && mask.rank() == 2 &&
                       mask.dim(0) == x.dim(0) && mask.dim(1) == x.dim(1);
  if (!single && !batched) {
    throw ShapeError("masked_mean: rows " + shape_str(x.shape()) +
                     " incompatible with mask " + shape_str(mask.shape()));
  }
  const std::size_t batch = single ? 1 : x.dim(0);
  const std::size_t n = single ? x.dim(0) : x.dim(1);
  const std::size_t d = x.shape().back();
  auto mv = mask.data();
  std::vector<double> counts(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      check_mask_value(mv[b * n + i]);
      counts[b] += mv[b * n + i];
    }
    if (counts[b] == 0.0) {
      throw DegenerateInputError("masked_mean: all rows masked in batch " +
                                 std::to_string(b));
    }
  }
  std::vector<double> out(batch * d, 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mv[b * n + i] == 0.0) continue;
      const double* row = xv.data() + (b * n + i) * d;
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] /= counts[b];
  }
  Shape shape = single ? Shape{d} : Shape{batch, d};
  Tensor y = tape.make_output(std::move(shape), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node(), mn = mask.node();
  tape.record(y, [xn, yn, mn, counts, batch, n, d] {
    auto& gx = xn->ensure_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        if (mn->value[b * n + i] == 0.0) continue;
        double* dst = gx.data() + (b * n + i) * d;
        for (std::size_t j = 0; j < d; ++j) {
          dst[j] += yn->grad[b * d + j] / counts[b];
        }
      }
    }
  });
  return y;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias) {
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) +
                     "], got " + shape_str(gain.shape()) + " and " +
                     shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel()), inv_std(rows), out(x.numel());
  auto xv = x.data();
  auto gv = gain.data(), bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x, &gain, &bias});
  NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node();
  tape.record(y, [xn, gn, bn, yn, xhat, inv_std, rows, d] {
    const auto& g = yn->grad;
    if (gn->requires_grad) {
      auto& gg = gn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
    if (!xn->requires_grad) return;
    auto& gx = xn->ensure_grad();
    const double dn = static_cast<double>(d);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = g[r * d + j] * gn->value[j];
        s1 += dxhat[j];
        s2 += dxhat[j] * xhat[r * d + j];
      }
      for (std::size_t j = 0; j < d; ++j) {
        gx[r * d + j] += inv_std[r] / dn *
                         (dn * dxhat[j] - s1 - xhat[r * d + j] * s2);
      }
    }
  });
  return y;
}

Tensor l2_normalize_rows(Tape& tape, const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("l2_normalize_rows: expected vector or matrix, got " +
                     shape_str(x.shape()));
  }
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  std::vector<double> norms(rows), out(x.numel());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += xv[r * d + j] * xv[r * d + j];
    if (ss == 0.0) {
      throw DomainError("cosine similarity of a zero-norm vector (row " +
                        std::to_string(r) + ")");
    }
    norms[r] = std::sqrt(ss);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / norms[r];
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, norms, rows, d] {
    auto& gx = xn->ensure_grad();
    const auto& g = yn->grad;
    const auto& yv = yn->value;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += yv[r * d + j] * g[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        gx[r * d + j] += (g[r * d + j] - yv[r * d + j] * dot) / norms[r];
      }
    }
  });
  return y;
}

Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    throw ShapeError("cosine_similarity: expected equal vectors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  return sum(tape, mul(tape, l2_normalize_rows(tape, a),
                       l2_normalize_rows(tape, b)));
}

Tensor outer_add(Tape& tape, const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0)) {
    throw ShapeError("outer_add: " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()) + " do not share a batch axis");
  }
  const std::size_t batch = x.dim(0), n = x.dim(1), m = y.dim(1);
  std::vector<double> out(batch * n * m);
  auto xv = x.data(), yv = y.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        out[(b * n + i) * m + j] = xv[b * n + i] + yv[b * m + j];
      }
    }
  }
  Tensor o = tape.make_output({batch, n, m}, std::move(out), {&x, &y});
  NodePtr xn = x.node(), yn = y.node(), on = o.node();
  tape.record(o, [xn, yn, on, batch, n, m] {
    const auto& g = on->grad;
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            gx[b * n + i] += g[(b * n + i) * m + j];
    }
    if (yn->requires_grad) {
      auto& gy = yn->ensure_grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            gy[b * m + j] += g[(b * n + i) * m + j];
    }
  });
  return o;
}

namespace {
// Maps between [b×N×d] and [(b·H)×N×dh] flat offsets.
template <typename F>
void for_each_head_index(std::size_t batch, std::size_t n, std::size_t heads,
                         std::size_t dh, F f) {
  const std::size_t d = heads * dh;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < dh; ++e)
          f((b * n + i) * d + h * dh + e, ((b * heads + h) * n + i) * dh + e);
}
}  // namespace

Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) +
                     " into " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = x.dim(0), n = x.dim(1), dh = x.dim(2) / heads;
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for_each_head_index(batch, n, heads, dh,
                      [&](std::size_t src, std::size_t dst) {
                        out[dst] = xv[src];
                      });
  Tensor y = tape.make_output({batch * heads, n, dh}, std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, batch, n, heads, dh] {
    auto& gx = xn->ensure_grad();
    for_each_head_index(batch, n, heads, dh,
                        [&](std::size_t src, std::size_t dst) {
                          gx[src] += yn->grad[dst];
                        });
  });
  return y;
}

Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: cannot merge " + shape_str(x.shape()) +
                     " from " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = x.dim(0) / heads, n = x.dim(1), dh = x.dim(2);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for_each_head_index(batch, n, heads, dh,
                      [&](std::size_t dst, std::size_t src) {
                        out[dst] = xv[src];
                      });
  Tensor y = tape.make_output({batch, n, heads * dh}, std::move(out), {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn, batch, n, heads, dh] {
    auto& gx = xn->ensure_grad();
    for_each_head_index(batch, n, heads, dh,
                        [&](std::size_t dst, std::size_t src) {
                          gx[src] += yn->grad[dst];
                        });
  });
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor y = tape.make_output({}, {total}, {&x});
  NodePtr xn = x.node(), yn = y.node();
  tape.record(y, [xn, yn] {
    auto& gx = xn->ensure_grad();
    for (double& g : gx) g += yn->grad[0];
  });
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace ag
}  // namespace cmsclr
