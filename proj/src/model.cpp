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

#include "cmsclr/model.hpp"

#include <algorithm>

#include "cmsclr/error.hpp"

namespace cmsclr {

void ModelConfig::validate() const {
  if (width == 0 || num_heads == 0 || vocab_size == 0 || max_seq_len == 0 ||
      visual_dim == 0 || acoustic_dim == 0 || fusion_heads == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (width % num_heads != 0) {
    throw ConfigError("num_heads " + std::to_string(num_heads) +
                      " does not divide width " + std::to_string(width));
  }
  if (width % fusion_heads != 0) {
    throw ConfigError("fusion_heads " + std::to_string(fusion_heads) +
                      " does not divide width " + std::to_string(width));
  }
}

Model Model::init(const ModelConfig& config, std::uint64_t seed,
                  CmsSchedule schedule) {
  config.validate();
  schedule.validate(config.num_layers);
  Rng rng(seed);
  const std::size_t d = config.width;
  Model m;
  m.config_ = config;
  m.schedule_ = schedule;
  m.embedder = TokenEmbedder::init(config.vocab_size, config.max_seq_len, d, rng);
  m.visual_projection = init_matrix(config.visual_dim, d, rng);
  m.acoustic_projection = init_matrix(config.acoustic_dim, d, rng);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    m.cms_layers.push_back(CmsLayerParams::init(d, rng));
  }
  m.visual_lstm = LstmParams::init(config.visual_dim, d, rng);
  m.acoustic_lstm = LstmParams::init(config.acoustic_dim, d, rng);
  m.text_head = ProjectionHead::init(d, rng);
  m.visual_head = ProjectionHead::init(d, rng);
  m.acoustic_head = ProjectionHead::init(d, rng);
  m.fusion = FusionParams::init(d, config.fusion_heads, rng);
  return m;
}

void Model::set_schedule(const CmsSchedule& schedule) {
  schedule.validate(config_.num_layers);
  schedule_ = schedule;
}

ForwardResult Model::forward(Tape& tape, const ModalityBatch& batch,
                             const ForwardOptions& options) const {
  const std::size_t b = batch.size;
  if (b == 0) throw DataError("empty batch");
  if (batch.visual.dim(2) != config_.visual_dim ||
      batch.acoustic.dim(2) != config_.acoustic_dim) {
    throw ConfigError("batch feature widths " +
                      shape_str(batch.visual.shape()) + ", " +
                      shape_str(batch.acoustic.shape()) +
                      " do not match the model");
  }
  ForwardResult r;
  Tensor x = embed_tokens(tape, embedder, batch.tokens, b, batch.seq_len);
  NonverbalStreams streams{
      project_nonverbal_features(tape, batch.visual, visual_projection),
      project_nonverbal_features(tape, batch.acoustic, acoustic_projection),
      batch.visual_mask, batch.acoustic_mask};
  r.text_hidden = cms_encoder_forward(
      tape, x, streams, batch.text_mask, cms_layers, config_.num_heads,
      options.schedule.value_or(schedule_), options.injected, options.probe);
  Tensor hv = lstm_forward(tape, batch.visual, batch.visual_mask, visual_lstm);
  Tensor ha =
      lstm_forward(tape, batch.acoustic, batch.acoustic_mask, acoustic_lstm);
  r.text = subnetwork_forward(tape, r.text_hidden, batch.text_mask, text_head);
  r.visual = subnetwork_forward(tape, hv, batch.visual_mask, visual_head);
  r.acoustic = subnetwork_forward(tape, ha, batch.acoustic_mask, acoustic_head);
  r.prediction = fusion_forward(
      tape, fuse(tape, r.text.middle, r.visual.middle, r.acoustic.middle),
      fusion);
  return r;
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  embedder.collect("embedder.", out);
  out.push_back({"visual_projection", visual_projection});
  out.push_back({"acoustic_projection", acoustic_projection});
  for (std::size_t l = 0; l < cms_layers.size(); ++l) {
    cms_layers[l].collect("cms." + std::to_string(l) + ".", out);
  }
  visual_lstm.collect("visual_lstm.", out);
  acoustic_lstm.collect("acoustic_lstm.", out);
  text_head.collect("text_head.", out);
  visual_head.collect("visual_head.", out);
  acoustic_head.collect("acoustic_head.", out);
  fusion.collect("fusion.", out);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Model Model::clone() const {
  Model m = Model::init(config_, 0, schedule_);
  m.copy_values_from(*this);
  return m;
}

void Model::copy_values_from(const Model& other) {
  if (!(other.config_ == config_)) {
    throw ConfigError("cannot copy parameters between different configs");
  }
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto from = src[i].tensor.data();
    std::copy(from.begin(), from.end(), dst[i].tensor.mutable_data().begin());
  }
}

}  // namespace cmsclr
