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

// JSONL datasets, the synthetic context-dependent generator, and batching.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmsclr/model.hpp"

namespace cmsclr {

struct DatasetRecord {
  std::string id;
  std::vector<int> tokens;
  std::size_t visual_frames = 0;
  std::vector<double> visual;  // [visual_frames×d_v], row-major
  std::size_t acoustic_frames = 0;
  std::vector<double> acoustic;
  double label = 0.0;

  bool operator==(const DatasetRecord&) const = default;
};

struct FeatureWidths {
  std::size_t visual = 0;
  std::size_t acoustic = 0;
};

struct Dataset {
  FeatureWidths widths;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// One object per line: {"id", "tokens", "visual": [[...]], "acoustic":
// [[...]], "label"}. Blank lines are skipped. Parsing fans out over
// CMSCLR_THREADS worker threads (default: hardware concurrency) and keeps
// file order.
Dataset load_jsonl(const std::string& path, FeatureWidths expected);
Dataset parse_jsonl(const std::string& text, FeatureWidths expected);
void save_jsonl(const std::string& path, const Dataset& dataset);
std::string record_to_json(const DatasetRecord& record, FeatureWidths widths);

// Throws DataError describing the first violated constraint.
void validate_record(const DatasetRecord& record, FeatureWidths widths);

std::size_t worker_threads();

// Latent factors behind one synthetic record.
struct SyntheticLatents {
  std::string id;
  double context_sign = 1.0;  // s
  double intensity = 1.0;     // m
  double mean_valence = 0.0;  // mean of t over the tokens
  double label = 0.0;
};

struct SyntheticConfig {
  std::size_t samples = 768;
  double train_fraction = 2.0 / 3.0;
  double val_fraction = 1.0 / 6.0;
  std::size_t vocab_size = 64;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 8;
  std::size_t min_frames = 3;
  std::size_t max_frames = 6;
  std::size_t visual_dim = 8;
  std::size_t acoustic_dim = 8;
  double noise = 0.3;

  void validate() const;
};

struct SyntheticSplit {
  Dataset data;
  std::vector<SyntheticLatents> latents;
};

struct SyntheticData {
  SyntheticSplit train, val, test;
  std::vector<double> token_valence;  // t per vocabulary entry
};

// Label = clamp(3·s·m·mean(t), -3, 3). Visual frames carry s along a fixed
// direction, acoustic frames carry m along another, both with Gaussian noise.
SyntheticData generate_synthetic(std::uint64_t seed,
                                 const SyntheticConfig& config);

// Writes prefix.{train,val,test}.jsonl and matching .oracle.jsonl sidecars.
void write_synthetic(const SyntheticData& data, const std::string& prefix);
std::vector<SyntheticLatents> load_oracle(const std::string& path);

// MAE of the best prediction that sees only the tokens. With s = ±1 equally
// likely the conditional label distribution is symmetric, so this is mean |y|.
double text_only_bayes_mae(std::span<const SyntheticLatents> latents);

// Pads to the longest sequence in the selection. zero_nonverbal replaces the
// visual and acoustic features with zeros but keeps their masks.
ModalityBatch make_batch(const Dataset& dataset,
                         std::span<const std::size_t> indices,
                         bool zero_nonverbal = false);

}  // namespace cmsclr
