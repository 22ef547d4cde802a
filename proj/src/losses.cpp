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

#include "cmsclr/losses.hpp"

#include <cmath>
#include <string>

#include "cmsclr/error.hpp"

namespace cmsclr {

namespace {
int sign_class(double y) { return (y > 0.0) - (y < 0.0); }
}  // namespace

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be positive");
  }
  if (!(smoothing > 0.0 && smoothing <= 1.0)) {
    throw ConfigError("smoothing coefficient must lie in (0, 1]");
  }
  if (!(threshold >= 0.0)) {
    throw ConfigError("sign-similarity threshold must be nonnegative");
  }
}

SmoothedTargets SmoothedTargets::one_hot(std::size_t n) {
  SmoothedTargets t;
  t.n = n;
  t.probs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) t.probs[i * n + i] = 1.0;
  return t;
}

Tensor similarity_logits(Tape& tape, const Tensor& z_a, const Tensor& z_b,
                         double temperature) {
  if (z_a.rank() != 2 || z_a.shape() != z_b.shape()) {
    throw ShapeError("similarity_logits: expected equal [n×d] inputs, got " +
                     shape_str(z_a.shape()) + " and " + shape_str(z_b.shape()));
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const std::size_t n = z_a.dim(0), d = z_a.dim(1);
  Tensor a = ag::reshape(tape, ag::l2_normalize_rows(tape, z_a), {1, n, d});
  Tensor b = ag::reshape(tape, ag::l2_normalize_rows(tape, z_b), {1, n, d});
  Tensor cos = ag::reshape(tape, ag::bmm(tape, a, b, true), {n, n});
  return ag::scale(tape, cos, 1.0 / temperature);
}

Tensor directional_loss(Tape& tape, const Tensor& logits,
                        const SmoothedTargets& targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.n ||
      logits.dim(1) != targets.n) {
    throw ShapeError("directional_loss: logits " + shape_str(logits.shape()) +
                     " vs " + std::to_string(targets.n) + " targets");
  }
  Tensor log_probs = ag::log_softmax(tape, logits, 1);
  Tensor weighted = ag::mul(tape, log_probs, targets.tensor());
  return ag::scale(tape, ag::sum(tape, weighted),
                   -1.0 / static_cast<double>(targets.n));
}

SmoothedTargets smoothed_targets(std::span<const double> labels, double beta,
                                 double delta) {
  const std::size_t n = labels.size();
  SmoothedTargets t;
  t.n = n;
  t.probs.assign(n * n, 0.0);
  std::vector<std::size_t> similar;
  for (std::size_t i = 0; i < n; ++i) {
    similar.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (sign_class(labels[i]) == sign_class(labels[j]) &&
          std::abs(labels[i] - labels[j]) <= delta) {
        similar.push_back(j);
      }
    }
    if (similar.empty()) {
      t.probs[i * n + i] = 1.0;
      continue;
    }
    t.probs[i * n + i] = beta;
    const double share = (1.0 - beta) / static_cast<double>(similar.size());
    for (std::size_t j : similar) t.probs[i * n + j] = share;
  }
  return t;
}

Tensor pairwise_contrastive_loss(Tape& tape, const Tensor& z_l,
                                 const Tensor& z_v, const Tensor& z_a,
                                 std::span<const double> labels,
                                 const ContrastiveConfig& config) {
  config.validate();
  if (labels.size() < 2) {
    throw DegenerateInputError(
        "contrastive loss needs a batch of at least 2 samples");
  }
  for (const Tensor* z : {&z_l, &z_v, &z_a}) {
    if (z->rank() != 2 || z->dim(0) != labels.size()) {
      throw ShapeError("pairwise_contrastive_loss: embedding " +
                       shape_str(z->shape()) + " vs " +
                       std::to_string(labels.size()) + " labels");
    }
  }
  const SmoothedTargets targets =
      smoothed_targets(labels, config.smoothing, config.threshold);
  const double tau = config.temperature;
  const std::pair<const Tensor*, const Tensor*> directions[] = {
      {&z_l, &z_v}, {&z_v, &z_l}, {&z_l, &z_a},
      {&z_a, &z_l}, {&z_v, &z_a}, {&z_a, &z_v}};
  Tensor total;
  for (const auto& [anchor, other] : directions) {
    Tensor loss = directional_loss(
        tape, similarity_logits(tape, *anchor, *other, tau), targets);
    total = total.defined() ? ag::add(tape, total, loss) : loss;
  }
  return total;
}

Tensor mse_loss(Tape& tape, const Tensor& predictions,
                std::span<const double> labels) {
  if (predictions.rank() != 1 || predictions.dim(0) != labels.size()) {
    throw ShapeError("mse_loss: predictions " +
                     shape_str(predictions.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor target = Tensor::from({labels.size()},
                               std::vector<double>(labels.begin(), labels.end()));
  Tensor residual = ag::sub(tape, predictions, target);
  return ag::mean(tape, ag::mul(tape, residual, residual));
}

EmaState ema_update(EmaState state, double mse_value, double con_value) {
  if (!(con_value > 0.0)) {
    throw DomainError("EMA update needs a positive contrastive loss, got " +
                      std::to_string(con_value));
  }
  const double ratio = mse_value / con_value;
  if (!state.initialized) {
    state.nu = ratio;
    state.initialized = true;
  } else {
    state.nu = state.momentum * state.nu + (1.0 - state.momentum) * ratio;
  }
  return state;
}

Tensor total_loss(Tape& tape, const Tensor& predictions,
                  std::span<const double> labels, const Tensor& z_l,
                  const Tensor& z_v, const Tensor& z_a, const EmaState& state,
                  const ContrastiveConfig& config) {
  Tensor mse = mse_loss(tape, predictions, labels);
  Tensor con = pairwise_contrastive_loss(tape, z_l, z_v, z_a, labels, config);
  return ag::add(tape, mse, ag::scale(tape, con, state.nu));
}

}  // namespace cmsclr
