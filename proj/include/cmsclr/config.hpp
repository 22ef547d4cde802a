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

// Run configuration: model shape, optimizer, loss switches and the synthetic
// data recipe, with JSON round-tripping and named presets.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmsclr/data.hpp"
#include "cmsclr/losses.hpp"
#include "cmsclr/model.hpp"

namespace cmsclr {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t warmup_epochs = 30;
  std::size_t total_epochs = 300;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  double temperature = 0.1;
  double ema_momentum = 0.9;
  double smoothing = 0.9;
  double threshold = 0.1;

  CmsSchedule cms_mode = CmsSchedule::all_layers();
  bool contrastive = true;
  bool ema = true;
  bool label_smoothing = true;
  bool zero_nonverbal = false;

  SyntheticConfig synthetic;

  void validate() const;
  // β is forced to 1 when label smoothing is off.
  ContrastiveConfig contrastive_config() const;
  // Synthetic recipe with widths and vocabulary taken from the model.
  SyntheticConfig synthetic_config() const;
  FeatureWidths widths() const {
    return {model.visual_dim, model.acoustic_dim};
  }
};

// Known names: desk, mosi-paper, mosei-paper.
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string config_to_json(const TrainConfig& config, int indent = 2);
// Keys present in text override base; unknown keys are a ConfigError.
TrainConfig config_from_json(const std::string& text,
                             const TrainConfig& base = TrainConfig{});
TrainConfig load_config(const std::string& path,
                        const TrainConfig& base = TrainConfig{});

}  // namespace cmsclr
