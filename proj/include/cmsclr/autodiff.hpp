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

// Reverse-mode automatic differentiation over cmsclr::Tensor.
//
// Every differentiable operation takes the Tape it records onto as its first
// argument. There is no global graph: a Tape lives for one forward pass, is
// replayed once by backward(), and must be reset() before reuse. Tapes that
// were constructed with recording disabled evaluate values only.
//
// Broadcasting in binary ops is limited to two cases: the smaller operand is a
// scalar, or its shape equals a trailing suffix of the larger operand's shape.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cmsclr/tensor.hpp"

namespace cmsclr {

class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
  // accumulate into every requires_grad tensor reachable from the loss.
  void backward(const Tensor& loss);
  void reset();

  // Used by op implementations.
  Tensor make_output(Shape shape, std::vector<double> values,
                     std::initializer_list<const Tensor*> inputs);
  void record(const Tensor& output, std::function<void()> backward_fn);

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode> output;
    std::function<void()> backward_fn;
  };
  bool recording_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

namespace ag {

// Binary elementwise with scalar/trailing broadcast.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);

// [m×k]·[k×n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x[..., k]·w[k×n] -> [..., n]; leading dimensions are flattened.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w);
// x[..., k]·w[k×n] + bias[n].
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);
// [B×m×k]·[B×k×n], or [B×m×k]·[B×n×k]ᵀ when transpose_b.
Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b,
           bool transpose_b = false);
// [m×n] -> [n×m].
Tensor transpose(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);

// Row lookup: ids index the first axis of table[V×d], result [ids×d].
Tensor gather_rows(Tape& tape, const Tensor& table,
                   std::span<const int> ids);

// Max-subtracted softmax along axis.
Tensor softmax(Tape& tape, const Tensor& x, std::size_t axis);
Tensor log_softmax(Tape& tape, const Tensor& x, std::size_t axis);
// Softmax over the last axis of x[B×R×K] with key_mask[G×K] (entries 0/1),
// where B is a multiple of G and batch b uses mask row b / (B / G). Masked
// keys receive probability exactly 0; every row needs one unmasked key.
Tensor masked_softmax(Tape& tape, const Tensor& x, const Tensor& key_mask);

// Mean over the rows of x[n×d] (or x[b×n×d] per batch) whose mask is 1.
Tensor masked_mean(Tape& tape, const Tensor& x, const Tensor& mask);

// Normalizes the last axis to mean 0 / variance 1, then applies gain/bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias);
inline constexpr double kLayerNormEps = 1e-12;

// Rows of x[n×d] scaled to unit L2 norm. Zero rows are a DomainError.
Tensor l2_normalize_rows(Tape& tape, const Tensor& x);
Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b);

// x[B×N] ⊕ y[B×M] -> [B×N×M], out[b,i,j] = x[b,i] + y[b,j].
Tensor outer_add(Tape& tape, const Tensor& x, const Tensor& y);

// [b×N×d] <-> [(b·H)×N×(d/H)].
Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads);
Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace ag
}  // namespace cmsclr
