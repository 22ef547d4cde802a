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

#include "cmsclr/fusion.hpp"

#include "cmsclr/error.hpp"

namespace cmsclr {

FusionParams FusionParams::init(std::size_t width, std::size_t heads,
                                Rng& rng) {
  FusionParams p;
  p.slot_embedding = init_matrix(3, width, rng);
  p.block = TransformerLayerParams::init(width, rng);
  p.heads = heads;
  p.w1 = init_matrix(3 * width, width, rng);
  p.b1 = Tensor::zeros({width}, true);
  p.w2 = init_matrix(width, 1, rng);
  p.b2 = Tensor::zeros({1}, true);
  return p;
}

void FusionParams::collect(const std::string& prefix,
                           std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "slot_embedding", slot_embedding});
  block.collect(prefix, out);
  out.push_back({prefix + "w1", w1});
  out.push_back({prefix + "b1", b1});
  out.push_back({prefix + "w2", w2});
  out.push_back({prefix + "b2", b2});
}

Tensor fuse(Tape& tape, const Tensor& z1_l, const Tensor& z1_v,
            const Tensor& z1_a) {
  for (const Tensor* t : {&z1_v, &z1_a}) {
    if (t->shape() != z1_l.shape() || z1_l.rank() != 2) {
      throw ShapeError("fuse: modality widths differ, " +
                       shape_str(z1_l.shape()) + " vs " +
                       shape_str(t->shape()));
    }
  }
  const std::size_t b = z1_l.dim(0), d = z1_l.dim(1);
  return ag::concat(tape,
                    {ag::reshape(tape, z1_l, {b, 1, d}),
                     ag::reshape(tape, z1_v, {b, 1, d}),
                     ag::reshape(tape, z1_a, {b, 1, d})},
                    1);
}

Tensor fusion_forward(Tape& tape, const Tensor& fused,
                      const FusionParams& params) {
  if (fused.rank() != 3 || fused.dim(1) != 3) {
    throw ShapeError("fusion_forward: expected [b×3×d], got " +
                     shape_str(fused.shape()));
  }
  const std::size_t b = fused.dim(0), d = fused.dim(2);
  Tensor slots = ag::add(tape, fused, params.slot_embedding);
  Tensor all_valid = Tensor::full({b, 3}, 1.0);
  Tensor mixed = transformer_layer(tape, slots, Tensor(), all_valid,
                                   params.block, params.heads);
  Tensor flat = ag::reshape(tape, mixed, {b, 3 * d});
  Tensor hidden = ag::relu(tape, ag::affine(tape, flat, params.w1, params.b1));
  Tensor out = ag::affine(tape, hidden, params.w2, params.b2);
  return ag::reshape(tape, out, {b});
}

}  // namespace cmsclr
