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

#include <cstdint>
#include <string>
#include <vector>

#include "cmsclr/cms.hpp"
#include "cmsclr/config.hpp"
#include "cmsclr/data.hpp"
#include "oracles.hpp"

namespace testutil {

inline std::vector<double> values(const cmsclr::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

// CMS layer with every parameter random, including the scalar gate biases.
inline cmsclr::CmsLayerParams random_layer(std::size_t d, cmsclr::Rng& rng) {
  cmsclr::CmsLayerParams p = cmsclr::CmsLayerParams::init(d, rng);
  p.visual_gate_bias.mutable_data()[0] = rng.uniform(-1, 1);
  p.acoustic_gate_bias.mutable_data()[0] = rng.uniform(-1, 1);
  for (cmsclr::Tensor* t : {&p.block.ffn_in_bias, &p.block.ffn_out_bias,
                            &p.block.norm1_bias, &p.block.norm2_bias}) {
    for (double& v : t->mutable_data()) v = rng.uniform(-0.5, 0.5);
  }
  for (cmsclr::Tensor* t : {&p.block.norm1_gain, &p.block.norm2_gain}) {
    for (double& v : t->mutable_data()) v = rng.uniform(0.5, 1.5);
  }
  return p;
}

inline std::vector<cmsclr::CmsLayerParams> random_layers(std::size_t count,
                                                         std::size_t d,
                                                         std::uint64_t seed) {
  cmsclr::Rng rng(seed);
  std::vector<cmsclr::CmsLayerParams> out;
  for (std::size_t l = 0; l < count; ++l) out.push_back(random_layer(d, rng));
  return out;
}

inline oracle::CmsLayer to_oracle(const cmsclr::CmsLayerParams& p) {
  oracle::CmsLayer o;
  o.gate_v = values(p.visual_gate);
  o.gate_a = values(p.acoustic_gate);
  o.bias_v = p.visual_gate_bias.item();
  o.bias_a = p.acoustic_gate_bias.item();
  o.shift_v = values(p.visual_shift);
  o.shift_a = values(p.acoustic_shift);
  o.wq = values(p.block.query);
  o.wk = values(p.block.key);
  o.wv = values(p.block.value);
  o.wo = values(p.block.output);
  return o;
}

// Mask [b×len] whose sample s has valid[s] leading ones.
inline cmsclr::Tensor prefix_mask(std::size_t len,
                                  const std::vector<std::size_t>& valid) {
  std::vector<double> v(valid.size() * len, 0.0);
  for (std::size_t s = 0; s < valid.size(); ++s)
    for (std::size_t j = 0; j < valid[s] && j < len; ++j) v[s * len + j] = 1.0;
  return cmsclr::Tensor::from({valid.size(), len}, std::move(v));
}

inline cmsclr::NonverbalStreams random_streams(std::size_t b, std::size_t mv,
                                               std::size_t ma, std::size_t d,
                                               cmsclr::Rng& rng) {
  cmsclr::NonverbalStreams s;
  s.visual = cmsclr::random_tensor({b, mv, d}, rng);
  s.acoustic = cmsclr::random_tensor({b, ma, d}, rng);
  s.visual_mask = cmsclr::Tensor::full({b, mv}, 1.0);
  s.acoustic_mask = cmsclr::Tensor::full({b, ma}, 1.0);
  return s;
}

// Small model config used across the training tests.
inline cmsclr::TrainConfig tiny_config() {
  cmsclr::TrainConfig c;
  c.model.width = 16;
  c.model.num_layers = 2;
  c.model.num_heads = 2;
  c.model.vocab_size = 32;
  c.model.max_seq_len = 6;
  c.model.visual_dim = 5;
  c.model.acoustic_dim = 4;
  c.model.fusion_heads = 2;
  c.batch_size = 4;
  c.warmup_epochs = 1;
  c.total_epochs = 3;
  c.lr = 3e-3;
  c.synthetic.samples = 36;
  c.synthetic.min_tokens = 3;
  c.synthetic.max_tokens = 6;
  c.synthetic.min_frames = 2;
  c.synthetic.max_frames = 4;
  return c;
}

// The first `count` synthetic training records as one batch.
inline cmsclr::ModalityBatch synthetic_batch(const cmsclr::TrainConfig& c,
                                             std::uint64_t seed,
                                             std::size_t count) {
  cmsclr::SyntheticData data =
      cmsclr::generate_synthetic(seed, c.synthetic_config());
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  return cmsclr::make_batch(data.train.data, idx);
}

inline std::string temp_path(const std::string& name) {
  return "cmsclr_test_" + name;
}

}  // namespace testutil
