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

// Training objectives: MSE, the six-direction cross-modal contrastive loss
// with sentiment-aware soft targets, and the EMA-weighted total.

#pragma once

#include <span>
#include <vector>

#include "cmsclr/autodiff.hpp"

namespace cmsclr {

struct ContrastiveConfig {
  double temperature = 0.1;  // τ > 0
  double smoothing = 0.9;    // β in (0, 1]; 1 gives one-hot targets
  double threshold = 0.1;    // δ ≥ 0

  void validate() const;
};

struct EmaState {
  double nu = 0.0;
  double momentum = 0.9;  // α in [0, 1)
  bool initialized = false;
};

// Row i is the target distribution of anchor i over the batch.
struct SmoothedTargets {
  std::size_t n = 0;
  std::vector<double> probs;  // [n×n]

  double at(std::size_t i, std::size_t j) const { return probs[i * n + j]; }
  Tensor tensor() const { return Tensor::from({n, n}, probs); }
  static SmoothedTargets one_hot(std::size_t n);
};

// logits[i][k] = cos(z_a[i], z_b[k]) / τ.
Tensor similarity_logits(Tape& tape, const Tensor& z_a, const Tensor& z_b,
                         double temperature);

// Mean over anchors of -Σ_k targets[i][k] · log softmax_k(logits[i]).
Tensor directional_loss(Tape& tape, const Tensor& logits,
                        const SmoothedTargets& targets);

// β on the diagonal and (1-β)/|S_i| on every j ≠ i with the same sign
// (zero is its own sign) and |y_i - y_j| ≤ δ. Empty S_i gives a one-hot row.
SmoothedTargets smoothed_targets(std::span<const double> labels, double beta,
                                 double delta);

// Sum of directional losses over l→v, v→l, l→a, a→l, v→a, a→v, all sharing
// one target matrix built from the labels.
Tensor pairwise_contrastive_loss(Tape& tape, const Tensor& z_l,
                                 const Tensor& z_v, const Tensor& z_a,
                                 std::span<const double> labels,
                                 const ContrastiveConfig& config);

Tensor mse_loss(Tape& tape, const Tensor& predictions,
                std::span<const double> labels);

// ν̂ = mse / con; the first call sets ν = ν̂, later calls blend with momentum.
EmaState ema_update(EmaState state, double mse_value, double con_value);

// ℓ_MSE + ν·ℓ_Con with ν taken from state as a constant.
Tensor total_loss(Tape& tape, const Tensor& predictions,
                  std::span<const double> labels, const Tensor& z_l,
                  const Tensor& z_v, const Tensor& z_a, const EmaState& state,
                  const ContrastiveConfig& config);

}  // namespace cmsclr
