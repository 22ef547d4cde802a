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
#include <span>

namespace cmsclr {

struct MetricsReport {
  double mae = 0.0;
  double pearson = 0.0;
  double acc2_nonneg = 0.0;  // negative vs non-negative, all samples
  double acc2_posneg = 0.0;  // negative vs positive, zero labels excluded
  double f1_weighted_nonneg = 0.0;
  double f1_weighted_posneg = 0.0;
  std::size_t n_eval = 0;
  std::size_t n_posneg = 0;  // samples with a nonzero label

  bool operator==(const MetricsReport&) const = default;
};

// Predictions are binarized with the label rule. Pearson is 0 when either
// side has zero variance; the posneg pair is 0 when every label is zero.
MetricsReport compute_metrics(std::span<const double> predictions,
                              std::span<const double> labels);

}  // namespace cmsclr
