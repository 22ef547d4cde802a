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

#pragma once

#include <cstddef>
#include <vector>

#include "cmsclr/gradcheck.hpp"

namespace cmsclr {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay: w -= lr·λ·w, then the bias-corrected Adam update.
// Parameters without a gradient are treated as having a zero gradient.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  void step(const std::vector<NamedTensor>& params, double lr);
  std::size_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }

 private:
  AdamWOptions options_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// base·(e+1)/warmup during warmup, then linear decay reaching
// base/(total-warmup) at the last epoch.
double lr_schedule(std::size_t epoch, std::size_t warmup_epochs,
                   std::size_t total_epochs, double base_lr);

}  // namespace cmsclr
