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

#include "cmsclr/config.hpp"
#include "cmsclr/gradcheck.hpp"

namespace cmsclr {

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kMagTolerance = 1e-10;

// Finite-difference check of the full training loss (MSE plus ν·contrastive
// with ν = 0.5 when contrastive is on) over every model parameter, on one
// synthetic batch of config.batch_size samples drawn with config.seed.
GradCheckReport model_gradcheck(const TrainConfig& config, double step = 1e-5);

}  // namespace cmsclr
