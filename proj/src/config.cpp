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

#include "cmsclr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmsclr/error.hpp"

namespace cmsclr {

using json = nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& field,
          std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) {
      throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
  }
}

json model_json(const ModelConfig& m) {
  return json{{"width", m.width},
              {"num_layers", m.num_layers},
              {"num_heads", m.num_heads},
              {"vocab_size", m.vocab_size},
              {"max_seq_len", m.max_seq_len},
              {"visual_dim", m.visual_dim},
              {"acoustic_dim", m.acoustic_dim},
              {"fusion_heads", m.fusion_heads}};
}

json synthetic_json(const SyntheticConfig& s) {
  return json{{"samples", s.samples},
              {"train_fraction", s.train_fraction},
              {"val_fraction", s.val_fraction},
              {"min_tokens", s.min_tokens},
              {"max_tokens", s.max_tokens},
              {"min_frames", s.min_frames},
              {"max_frames", s.max_frames},
              {"noise", s.noise}};
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  cms_mode.validate(model.num_layers);
  if (total_epochs == 0) throw ConfigError("total_epochs must be positive");
  if (warmup_epochs >= total_epochs) {
    throw ConfigError("warmup_epochs must be below total_epochs");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (contrastive && batch_size < 2) {
    throw ConfigError("contrastive training needs batch_size >= 2");
  }
  if (zero_nonverbal && contrastive) {
    throw ConfigError(
        "zero_nonverbal leaves the visual and acoustic projections constant; "
        "turn contrastive off");
  }
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) {
    throw ConfigError("ema_momentum must lie in [0, 1)");
  }
  contrastive_config().validate();
  synthetic_config().validate();
}

ContrastiveConfig TrainConfig::contrastive_config() const {
  return {temperature, label_smoothing ? smoothing : 1.0, threshold};
}

SyntheticConfig TrainConfig::synthetic_config() const {
  SyntheticConfig s = synthetic;
  s.vocab_size = model.vocab_size;
  s.visual_dim = model.visual_dim;
  s.acoustic_dim = model.acoustic_dim;
  if (s.max_tokens > model.max_seq_len) {
    throw ConfigError("synthetic max_tokens exceeds max_seq_len");
  }
  return s;
}

TrainConfig preset(const std::string& name) {
  TrainConfig c;
  if (name == "desk") return c;
  if (name != "mosi-paper" && name != "mosei-paper") {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.model.width = 768;
  c.model.num_layers = 12;
  c.model.num_heads = 12;
  c.model.vocab_size = 30522;
  c.model.max_seq_len = 50;
  c.model.acoustic_dim = 74;
  c.model.fusion_heads = 2;
  c.lr = 1e-4;
  c.warmup_epochs = 50;
  c.total_epochs = 500;
  c.batch_size = 128;
  if (name == "mosi-paper") {
    c.model.visual_dim = 47;
    c.weight_decay = 0.1;
  } else {
    c.model.visual_dim = 35;
    c.weight_decay = 1e-3;
  }
  return c;
}

std::vector<std::string> preset_names() {
  return {"desk", "mosi-paper", "mosei-paper"};
}

std::string config_to_json(const TrainConfig& c, int indent) {
  json j{{"model", model_json(c.model)},
         {"lr", c.lr},
         {"weight_decay", c.weight_decay},
         {"warmup_epochs", c.warmup_epochs},
         {"total_epochs", c.total_epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"temperature", c.temperature},
         {"ema_momentum", c.ema_momentum},
         {"smoothing", c.smoothing},
         {"threshold", c.threshold},
         {"cms_mode", c.cms_mode.str()},
         {"contrastive", c.contrastive},
         {"ema", c.ema},
         {"label_smoothing", c.label_smoothing},
         {"zero_nonverbal", c.zero_nonverbal},
         {"synthetic", synthetic_json(c.synthetic)}};
  return j.dump(indent);
}

TrainConfig config_from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c = base;
  std::set<std::string> seen;
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("config key 'model' must be an object");
    std::set<std::string> mseen;
    take(m, "width", c.model.width, mseen);
    take(m, "num_layers", c.model.num_layers, mseen);
    take(m, "num_heads", c.model.num_heads, mseen);
    take(m, "vocab_size", c.model.vocab_size, mseen);
    take(m, "max_seq_len", c.model.max_seq_len, mseen);
    take(m, "visual_dim", c.model.visual_dim, mseen);
    take(m, "acoustic_dim", c.model.acoustic_dim, mseen);
    take(m, "fusion_heads", c.model.fusion_heads, mseen);
    reject_unknown(m, mseen, "model.");
  }
  seen.insert("model");
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    if (!s.is_object()) {
      throw ConfigError("config key 'synthetic' must be an object");
    }
    std::set<std::string> sseen;
    take(s, "samples", c.synthetic.samples, sseen);
    take(s, "train_fraction", c.synthetic.train_fraction, sseen);
    take(s, "val_fraction", c.synthetic.val_fraction, sseen);
    take(s, "min_tokens", c.synthetic.min_tokens, sseen);
    take(s, "max_tokens", c.synthetic.max_tokens, sseen);
    take(s, "min_frames", c.synthetic.min_frames, sseen);
    take(s, "max_frames", c.synthetic.max_frames, sseen);
    take(s, "noise", c.synthetic.noise, sseen);
    reject_unknown(s, sseen, "synthetic.");
  }
  seen.insert("synthetic");
  take(j, "lr", c.lr, seen);
  take(j, "weight_decay", c.weight_decay, seen);
  take(j, "warmup_epochs", c.warmup_epochs, seen);
  take(j, "total_epochs", c.total_epochs, seen);
  take(j, "batch_size", c.batch_size, seen);
  take(j, "seed", c.seed, seen);
  take(j, "temperature", c.temperature, seen);
  take(j, "ema_momentum", c.ema_momentum, seen);
  take(j, "smoothing", c.smoothing, seen);
  take(j, "threshold", c.threshold, seen);
  std::string mode = c.cms_mode.str();
  take(j, "cms_mode", mode, seen);
  c.cms_mode = CmsSchedule::parse(mode);
  take(j, "contrastive", c.contrastive, seen);
  take(j, "ema", c.ema, seen);
  take(j, "label_smoothing", c.label_smoothing, seen);
  take(j, "zero_nonverbal", c.zero_nonverbal, seen);
  reject_unknown(j, seen, "");
  return c;
}

TrainConfig load_config(const std::string& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str(), base);
}

}  // namespace cmsclr
