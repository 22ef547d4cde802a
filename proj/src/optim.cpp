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

#include "cmsclr/optim.hpp"

#include <cmath>
#include <string>

#include "cmsclr/error.hpp"

namespace cmsclr {

void AdamW::step(const std::vector<NamedTensor>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw UsageError("optimizer was created for a different parameter list");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * options_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto w = t.mutable_data();
    if (m_[k].size() != w.size()) {
      throw UsageError("parameter " + params[k].name + " changed size");
    }
    const std::vector<double> g = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= decay;
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

double lr_schedule(std::size_t epoch, std::size_t warmup_epochs,
                   std::size_t total_epochs, double base_lr) {
  if (epoch >= total_epochs || warmup_epochs >= total_epochs) {
    throw ConfigError("lr_schedule: epoch " + std::to_string(epoch) +
                      " with warmup " + std::to_string(warmup_epochs) +
                      " and total " + std::to_string(total_epochs));
  }
  if (epoch < warmup_epochs) {
    return base_lr * static_cast<double>(epoch + 1) /
           static_cast<double>(warmup_epochs);
  }
  return base_lr * static_cast<double>(total_epochs - epoch) /
         static_cast<double>(total_epochs - warmup_epochs);
}

}  // namespace cmsclr
