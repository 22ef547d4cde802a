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

#include "cmsclr/cms.hpp"

namespace cmsclr {

// Transformer over the three modality slots (l, v, a) and a two-layer
// regression head on the flattened result.
struct FusionParams {
  Tensor slot_embedding;  // [3×d]
  TransformerLayerParams block;
  std::size_t heads = 2;
  Tensor w1, b1;  // [3d×d_h], [d_h]
  Tensor w2, b2;  // [d_h×1], [1]

  static FusionParams init(std::size_t width, std::size_t heads, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Stacks [b×d] middle-layer projections as a [b×3×d] sequence, order l, v, a.
Tensor fuse(Tape& tape, const Tensor& z1_l, const Tensor& z1_v,
            const Tensor& z1_a);

// z' [b×3×d] -> prediction [b]. No squashing; predictions are unbounded.
Tensor fusion_forward(Tape& tape, const Tensor& fused,
                      const FusionParams& params);

}  // namespace cmsclr
