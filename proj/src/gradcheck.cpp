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

#include "cmsclr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cmsclr/error.hpp"

namespace cmsclr {

GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& f,
                                  const std::vector<NamedTensor>& inputs,
                                  double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw UsageError("finite_diff_check: step must lie in [1e-7, 1e-3]");
  }
  for (const auto& in : inputs) {
    if (!in.tensor.requires_grad()) {
      throw UsageError("finite_diff_check: '" + in.name +
                       "' does not require grad");
    }
  }
  std::vector<Tensor> handles;
  for (const auto& in : inputs) handles.push_back(in.tensor);
  for (auto& t : handles) t.zero_grad();

  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : handles) {
    analytic.push_back(t.grad());
    t.zero_grad();
  }

  auto evaluate = [&f] {
    Tape tape(/*recording=*/false);
    return f(tape).item();
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < handles.size(); ++p) {
    auto values = handles[p].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double plus = evaluate();
      values[i] = original - h;
      const double minus = evaluate();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_tensor = inputs[p].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

double finite_diff_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
    double h) {
  Tensor input = x.clone_with_grad(true);
  return finite_diff_check([&](Tape& tape) { return f(tape, input); },
                           {{"x", input}}, h)
      .max_rel_error;
}

}  // namespace cmsclr
