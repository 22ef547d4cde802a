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

#include "cmsclr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cmsclr/error.hpp"

namespace cmsclr {

using json = nlohmann::json;

namespace {

std::string line_prefix(std::size_t line) {
  return "line " + std::to_string(line) + ": ";
}

std::vector<double> read_frames(const json& j, const char* key,
                                std::size_t& frames, std::size_t& width) {
  const json& rows = j.at(key);
  if (!rows.is_array()) {
    throw DataError(std::string(key) + " must be an array of frames");
  }
  frames = rows.size();
  width = frames ? rows[0].size() : 0;
  std::vector<double> flat;
  flat.reserve(frames * width);
  for (const json& row : rows) {
    if (!row.is_array() || row.size() != width) {
      throw DataError(std::string(key) + " frames have inconsistent widths");
    }
    for (const json& v : row) {
      if (!v.is_number()) throw DataError(std::string(key) + " holds a non-number");
      flat.push_back(v.get<double>());
    }
  }
  return flat;
}

struct ParsedLine {
  DatasetRecord record;
  FeatureWidths widths;
};

ParsedLine parse_line(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw DataError("record must be a JSON object");
  ParsedLine p;
  DatasetRecord& r = p.record;
  r.id = j.at("id").get<std::string>();
  for (const json& t : j.at("tokens")) {
    if (!t.is_number_integer()) throw DataError("token ids must be integers");
    r.tokens.push_back(t.get<int>());
  }
  r.visual = read_frames(j, "visual", r.visual_frames, p.widths.visual);
  r.acoustic = read_frames(j, "acoustic", r.acoustic_frames, p.widths.acoustic);
  if (!j.at("label").is_number()) throw DataError("label must be a number");
  r.label = j.at("label").get<double>();
  return p;
}

void check_widths(const ParsedLine& p, FeatureWidths expected) {
  if (p.widths.visual != expected.visual ||
      p.widths.acoustic != expected.acoustic) {
    throw DataError("feature widths (" + std::to_string(p.widths.visual) +
                    ", " + std::to_string(p.widths.acoustic) +
                    ") do not match expected (" +
                    std::to_string(expected.visual) + ", " +
                    std::to_string(expected.acoustic) + ")");
  }
}

json latents_to_json(const SyntheticLatents& l) {
  return json{{"id", l.id},
              {"s", l.context_sign},
              {"m", l.intensity},
              {"mean_valence", l.mean_valence},
              {"label", l.label}};
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<double> direction(std::size_t dim, Rng& rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  for (double& x : u) {
    x = rng.normal();
    norm += x * x;
  }
  const double s = std::sqrt(static_cast<double>(dim) / norm);
  for (double& x : u) x *= s;
  return u;
}

}  // namespace

void validate_record(const DatasetRecord& r, FeatureWidths widths) {
  if (r.tokens.empty()) throw DataError("record " + r.id + " has no tokens");
  for (int t : r.tokens) {
    if (t < 0) {
      throw DataError("record " + r.id + " has negative token id " +
                      std::to_string(t));
    }
  }
  if (r.visual_frames == 0 || r.acoustic_frames == 0) {
    throw DataError("record " + r.id + " has an empty nonverbal sequence");
  }
  if (r.visual.size() != r.visual_frames * widths.visual ||
      r.acoustic.size() != r.acoustic_frames * widths.acoustic) {
    throw DataError("record " + r.id + " feature sizes do not match widths");
  }
  if (!std::isfinite(r.label) || r.label < -3.0 || r.label > 3.0) {
    throw DataError("record " + r.id + " label " + std::to_string(r.label) +
                    " outside [-3, 3]");
  }
  for (double v : r.visual) {
    if (!std::isfinite(v)) throw DataError("record " + r.id + " has non-finite visual value");
  }
  for (double v : r.acoustic) {
    if (!std::isfinite(v)) throw DataError("record " + r.id + " has non-finite acoustic value");
  }
}

std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CMSCLR_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) {
      n = std::min(n, static_cast<std::size_t>(cap));
    }
  }
  return n;
}

Dataset parse_jsonl(const std::string& text, FeatureWidths expected) {
  std::vector<std::pair<std::size_t, std::string>> lines;
  {
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      lines.emplace_back(number, std::move(line));
    }
  }

  std::vector<ParsedLine> parsed(lines.size());
  std::vector<std::exception_ptr> errors(lines.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t number = lines[i].first;
      try {
        parsed[i] = parse_line(lines[i].second);
      } catch (const json::parse_error& e) {
        errors[i] = std::make_exception_ptr(
            ParseError(line_prefix(number) + "malformed JSON: " + e.what()));
      } catch (const json::exception& e) {
        errors[i] = std::make_exception_ptr(
            DataError(line_prefix(number) + "schema error: " + e.what()));
      } catch (const Error& e) {
        errors[i] = std::make_exception_ptr(
            DataError(line_prefix(number) + e.what()));
      }
    }
  };
  const std::size_t workers = std::min(worker_threads(), std::max<std::size_t>(1, lines.size() / 64));
  if (workers <= 1) {
    work(0, lines.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (lines.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(lines.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  Dataset ds;
  ds.widths = expected;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (ds.widths.visual == 0 && ds.widths.acoustic == 0) {
      ds.widths = parsed[i].widths;
    }
    try {
      check_widths(parsed[i], ds.widths);
      validate_record(parsed[i].record, ds.widths);
    } catch (const Error& e) {
      throw DataError(line_prefix(lines[i].first) + e.what());
    }
    ds.records.push_back(std::move(parsed[i].record));
  }
  return ds;
}

Dataset load_jsonl(const std::string& path, FeatureWidths expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str(), expected);
}

std::string record_to_json(const DatasetRecord& r, FeatureWidths widths) {
  auto frames = [](const std::vector<double>& flat, std::size_t n,
                   std::size_t w) {
    json rows = json::array();
    for (std::size_t f = 0; f < n; ++f) {
      rows.push_back(std::vector<double>(flat.begin() + f * w,
                                         flat.begin() + (f + 1) * w));
    }
    return rows;
  };
  json j{{"id", r.id},
         {"tokens", r.tokens},
         {"visual", frames(r.visual, r.visual_frames, widths.visual)},
         {"acoustic", frames(r.acoustic, r.acoustic_frames, widths.acoustic)},
         {"label", r.label}};
  return j.dump();
}

void save_jsonl(const std::string& path, const Dataset& dataset) {
  std::vector<std::string> lines;
  lines.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    lines.push_back(record_to_json(r, dataset.widths));
  }
  write_lines(path, lines);
}

void SyntheticConfig::validate() const {
  if (samples == 0) throw ConfigError("synthetic sample count must be positive");
  if (train_fraction < 0 || val_fraction < 0 ||
      train_fraction + val_fraction > 1.0 + 1e-12) {
    throw ConfigError("split fractions must be nonnegative and sum to at most 1");
  }
  if (vocab_size < 2) throw ConfigError("synthetic vocab needs at least 2 ids");
  if (min_tokens == 0 || min_tokens > max_tokens) {
    throw ConfigError("synthetic token length range is invalid");
  }
  if (min_frames == 0 || min_frames > max_frames) {
    throw ConfigError("synthetic frame range is invalid");
  }
  if (visual_dim == 0 || acoustic_dim == 0) {
    throw ConfigError("synthetic feature widths must be positive");
  }
  if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
}

SyntheticData generate_synthetic(std::uint64_t seed,
                                 const SyntheticConfig& config) {
  config.validate();
  Rng rng(seed);
  SyntheticData out;
  // Id 0 is reserved for padding and carries no valence.
  out.token_valence.assign(config.vocab_size, 0.0);
  for (std::size_t k = 1; k < config.vocab_size; ++k) {
    out.token_valence[k] = rng.uniform(-1.0, 1.0);
  }
  const std::vector<double> u = direction(config.visual_dim, rng);
  const std::vector<double> w = direction(config.acoustic_dim, rng);

  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(config.samples) * config.train_fraction));
  const std::size_t n_val = std::min(
      config.samples - n_train,
      static_cast<std::size_t>(std::llround(
          static_cast<double>(config.samples) * config.val_fraction)));
  const FeatureWidths widths{config.visual_dim, config.acoustic_dim};
  for (SyntheticSplit* s : {&out.train, &out.val, &out.test}) {
    s->data.widths = widths;
  }

  auto length = [&](std::size_t lo, std::size_t hi) {
    return lo + rng.index(hi - lo + 1);
  };
  for (std::size_t i = 0; i < config.samples; ++i) {
    DatasetRecord r;
    SyntheticLatents lat;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    r.id = lat.id = id;

    const std::size_t n_tok = length(config.min_tokens, config.max_tokens);
    double valence = 0.0;
    for (std::size_t k = 0; k < n_tok; ++k) {
      const int t = 1 + static_cast<int>(rng.index(config.vocab_size - 1));
      r.tokens.push_back(t);
      valence += out.token_valence[t];
    }
    lat.mean_valence = valence / static_cast<double>(n_tok);
    lat.context_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    lat.intensity = rng.uniform(0.5, 1.5);

    r.visual_frames = length(config.min_frames, config.max_frames);
    for (std::size_t f = 0; f < r.visual_frames; ++f) {
      for (double uk : u) {
        r.visual.push_back(lat.context_sign * uk + config.noise * rng.normal());
      }
    }
    r.acoustic_frames = length(config.min_frames, config.max_frames);
    for (std::size_t f = 0; f < r.acoustic_frames; ++f) {
      for (double wk : w) {
        r.acoustic.push_back(lat.intensity * wk + config.noise * rng.normal());
      }
    }
    lat.label = std::clamp(
        3.0 * lat.context_sign * lat.intensity * lat.mean_valence, -3.0, 3.0);
    r.label = lat.label;

    SyntheticSplit& split = i < n_train           ? out.train
                            : i < n_train + n_val ? out.val
                                                  : out.test;
    split.data.records.push_back(std::move(r));
    split.latents.push_back(std::move(lat));
  }
  return out;
}

void write_synthetic(const SyntheticData& data, const std::string& prefix) {
  const std::pair<const char*, const SyntheticSplit*> splits[] = {
      {"train", &data.train}, {"val", &data.val}, {"test", &data.test}};
  for (const auto& [name, split] : splits) {
    save_jsonl(prefix + "." + name + ".jsonl", split->data);
    std::vector<std::string> lines;
    for (const auto& l : split->latents) lines.push_back(latents_to_json(l).dump());
    write_lines(prefix + "." + name + ".oracle.jsonl", lines);
  }
}

std::vector<SyntheticLatents> load_oracle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open oracle file " + path);
  std::vector<SyntheticLatents> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("s").get<double>(),
                     j.at("m").get<double>(), j.at("mean_valence").get<double>(),
                     j.at("label").get<double>()});
    } catch (const json::exception& e) {
      throw ParseError(line_prefix(number) + e.what());
    }
  }
  return out;
}

double text_only_bayes_mae(std::span<const SyntheticLatents> latents) {
  if (latents.empty()) throw DataError("no latents");
  double total = 0.0;
  for (const auto& l : latents) total += std::abs(l.label);
  return total / static_cast<double>(latents.size());
}

ModalityBatch make_batch(const Dataset& dataset,
                         std::span<const std::size_t> indices,
                         bool zero_nonverbal) {
  if (indices.empty()) throw DataError("empty batch selection");
  const std::size_t b = indices.size();
  const std::size_t dv = dataset.widths.visual, da = dataset.widths.acoustic;
  std::size_t n = 0, mv = 0, ma = 0;
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw DataError("batch index out of range");
    const auto& r = dataset.records[i];
    n = std::max(n, r.tokens.size());
    mv = std::max(mv, r.visual_frames);
    ma = std::max(ma, r.acoustic_frames);
  }
  ModalityBatch batch;
  batch.size = b;
  batch.seq_len = n;
  batch.tokens.assign(b * n, 0);
  std::vector<double> text_mask(b * n, 0.0), visual(b * mv * dv, 0.0),
      visual_mask(b * mv, 0.0), acoustic(b * ma * da, 0.0),
      acoustic_mask(b * ma, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    const auto& r = dataset.records[indices[s]];
    std::copy(r.tokens.begin(), r.tokens.end(), batch.tokens.begin() + s * n);
    std::fill_n(text_mask.begin() + s * n, r.tokens.size(), 1.0);
    std::fill_n(visual_mask.begin() + s * mv, r.visual_frames, 1.0);
    std::fill_n(acoustic_mask.begin() + s * ma, r.acoustic_frames, 1.0);
    if (!zero_nonverbal) {
      std::copy(r.visual.begin(), r.visual.end(), visual.begin() + s * mv * dv);
      std::copy(r.acoustic.begin(), r.acoustic.end(),
                acoustic.begin() + s * ma * da);
    }
    batch.labels.push_back(r.label);
    batch.ids.push_back(r.id);
  }
  batch.text_mask = Tensor::from({b, n}, std::move(text_mask));
  batch.visual = Tensor::from({b, mv, dv}, std::move(visual));
  batch.visual_mask = Tensor::from({b, mv}, std::move(visual_mask));
  batch.acoustic = Tensor::from({b, ma, da}, std::move(acoustic));
  batch.acoustic_mask = Tensor::from({b, ma}, std::move(acoustic_mask));
  return batch;
}

}  // namespace cmsclr
