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

// The full network: token embedder and CMS encoder for text, LSTMs for the
// nonverbal streams, three projection heads, and the fusion regressor.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmsclr/cms.hpp"
#include "cmsclr/fusion.hpp"
#include "cmsclr/subnetworks.hpp"

namespace cmsclr {

struct ModelConfig {
  std::size_t width = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 8;
  std::size_t visual_dim = 8;
  std::size_t acoustic_dim = 8;
  std::size_t fusion_heads = 2;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// One padded batch. Sequences are left-aligned; masks mark valid positions.
struct ModalityBatch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::vector<int> tokens;  // [b×N], padding id 0
  Tensor text_mask;         // [b×N]
  Tensor visual;            // [b×Mv×d_v]
  Tensor visual_mask;       // [b×Mv]
  Tensor acoustic;          // [b×Ma×d_a]
  Tensor acoustic_mask;     // [b×Ma]
  std::vector<double> labels;
  std::vector<std::string> ids;
};

struct ForwardOptions {
  std::optional<CmsSchedule> schedule;  // defaults to the model's schedule
  const InjectedShift* injected = nullptr;
  CmsProbe* probe = nullptr;
};

struct ForwardResult {
  Tensor prediction;  // [b]
  Tensor text_hidden; // h_l [b×N×d]
  SubnetworkOutput text, visual, acoustic;
};

class Model {
 public:
  static Model init(const ModelConfig& config, std::uint64_t seed,
                    CmsSchedule schedule = CmsSchedule::all_layers());

  const ModelConfig& config() const { return config_; }
  const CmsSchedule& schedule() const { return schedule_; }
  void set_schedule(const CmsSchedule& schedule);

  ForwardResult forward(Tape& tape, const ModalityBatch& batch,
                        const ForwardOptions& options = {}) const;

  // Stable order; handles share storage with the model.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

  // Deep copy with fresh storage.
  Model clone() const;
  // Copies values from a model with the same configuration.
  void copy_values_from(const Model& other);

  TokenEmbedder embedder;
  Tensor visual_projection;    // [d_v×d]
  Tensor acoustic_projection;  // [d_a×d]
  std::vector<CmsLayerParams> cms_layers;
  LstmParams visual_lstm, acoustic_lstm;
  ProjectionHead text_head, visual_head, acoustic_head;
  FusionParams fusion;

 private:
  ModelConfig config_;
  CmsSchedule schedule_ = CmsSchedule::all_layers();
};

}  // namespace cmsclr
