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

#include "cmsclr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cmsclr/error.hpp"

namespace cmsclr {

namespace {

struct Binary {
  std::size_t n = 0;
  std::size_t correct = 0;
  // confusion[true][pred], class 1 = non-negative / positive
  std::array<std::array<std::size_t, 2>, 2> confusion{};

  void add(int truth, int pred) {
    ++n;
    correct += truth == pred;
    ++confusion[truth][pred];
  }
  double accuracy() const {
    return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  }
  double weighted_f1() const {
    if (n == 0) return 0.0;
    double total = 0.0;
    for (int c = 0; c < 2; ++c) {
      const std::size_t tp = confusion[c][c];
      const std::size_t fn = confusion[c][1 - c];
      const std::size_t fp = confusion[1 - c][c];
      const std::size_t support = tp + fn;
      const std::size_t denom = 2 * tp + fp + fn;
      const double f1 =
          denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom)
                : 0.0;
      total += f1 * static_cast<double>(support);
    }
    return total / static_cast<double>(n);
  }
};

}  // namespace

MetricsReport compute_metrics(std::span<const double> predictions,
                              std::span<const double> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (labels.empty()) throw DegenerateInputError("metrics: empty evaluation set");
  const std::size_t n = labels.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  MetricsReport r;
  r.n_eval = n;
  double abs_err = 0.0, mean_p = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    abs_err += std::abs(predictions[i] - labels[i]);
    mean_p += predictions[i];
    mean_y += labels[i];
  }
  r.mae = abs_err * inv_n;
  mean_p *= inv_n;
  mean_y *= inv_n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = predictions[i] - mean_p, dy = labels[i] - mean_y;
    sxy += dp * dy;
    sxx += dp * dp;
    syy += dy * dy;
  }
  r.pearson = (sxx > 0.0 && syy > 0.0)
                  ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0)
                  : 0.0;

  Binary nonneg, posneg;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = labels[i], p = predictions[i];
    nonneg.add(y >= 0.0, p >= 0.0);
    if (y != 0.0) posneg.add(y > 0.0, p > 0.0);
  }
  r.acc2_nonneg = nonneg.accuracy();
  r.f1_weighted_nonneg = nonneg.weighted_f1();
  r.acc2_posneg = posneg.accuracy();
  r.f1_weighted_posneg = posneg.weighted_f1();
  r.n_posneg = posneg.n;
  return r;
}

}  // namespace cmsclr
