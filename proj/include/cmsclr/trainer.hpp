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

// Training loop, evaluation, checkpoints and the embedding / CMS-map dumps.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmsclr/config.hpp"
#include "cmsclr/metrics.hpp"

namespace cmsclr {

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double train_con = 0.0;
  double nu = 0.0;  // weight used for this epoch's updates
  double val_mse = 0.0;
  double val_con = 0.0;
  double val_mae = 0.0;
  double val_pearson = 0.0;

  bool operator==(const EpochLog&) const = default;
};

std::string epoch_log_csv(const std::vector<EpochLog>& log);
void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log);

struct TrainResult {
  Model best_model;  // lowest validation MAE
  Model final_model;
  EmaState ema;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  MetricsReport best_val;
  std::string rng_state;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

// Throws NumericalError when a training loss is not finite.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const TrainHooks& hooks = {});

struct Evaluation {
  std::vector<double> predictions;
  double mse = 0.0;
  double con = 0.0;  // 0 when contrastive learning is off
  MetricsReport metrics;
};

// Batches of config.batch_size in dataset order; a trailing single sample
// joins the previous batch.
Evaluation evaluate_model(const Model& model, const Dataset& dataset,
                          const TrainConfig& config);

struct Checkpoint {
  TrainConfig config;
  Model model;
  EmaState ema;
  std::size_t epoch = 0;
  std::string rng_state;
};

// "CMSCLR01", u64 header length, JSON header, little-endian float64 payload.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// TSV: id, modality (l/v/a), label, e0..e{d-1}, using the final projections.
void export_embeddings(const Model& model, const Dataset& dataset,
                       const TrainConfig& config, const std::string& path);

struct CmsMap {
  std::string id;
  std::size_t rows = 0;  // valid words
  std::size_t cols = 0;  // valid nonverbal positions
  std::vector<double> values;  // ‖a_ij‖, row-major
};

// Throws ConfigError if the layer is out of range or CMS is not active there.
std::vector<CmsMap> cms_maps(const Model& model, const Dataset& dataset,
                             const TrainConfig& config, std::size_t layer);
// One CSV per sample in out_dir; returns the written paths.
std::vector<std::string> dump_cms_maps(const Model& model,
                                       const Dataset& dataset,
                                       const TrainConfig& config,
                                       std::size_t layer,
                                       const std::string& out_dir);

}  // namespace cmsclr
