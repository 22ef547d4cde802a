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

#include <functional>
#include <string>
#include <vector>

#include "cmsclr/autodiff.hpp"

namespace cmsclr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences with step h. The error per coordinate is
// |analytic - numeric| / max(1, |analytic|); the maximum is reported.
// f must be deterministic and build its graph on the tape it is given.
GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& f,
                                  const std::vector<NamedTensor>& inputs,
                                  double h);

// Single-input form: f receives x (requires_grad) and returns a scalar.
double finite_diff_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
    double h);

}  // namespace cmsclr
