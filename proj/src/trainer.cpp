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

#include "cmsclr/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cmsclr/error.hpp"
#include "cmsclr/optim.hpp"

namespace cmsclr {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'M', 'S', 'C', 'L', 'R', '0', '1'};

std::vector<std::vector<std::size_t>> split_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw DataError("checkpoint truncated");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::string format_g(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out.empty() ? "sample" : out;
}

}  // namespace

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::string out =
      "epoch,lr,train_mse,train_con,nu,val_mse,val_con,val_mae,val_pearson\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    for (double v : {e.lr, e.train_mse, e.train_con, e.nu, e.val_mse,
                     e.val_con, e.val_mae, e.val_pearson}) {
      out += ',' + format_g(v, 17);
    }
    out += '\n';
  }
  return out;
}

void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << epoch_log_csv(log);
  if (!out) throw IoError("write failed: " + path);
}

Evaluation evaluate_model(const Model& model, const Dataset& dataset,
                          const TrainConfig& config) {
  if (dataset.empty()) throw DegenerateInputError("evaluation set is empty");
  Evaluation ev;
  ev.predictions.reserve(dataset.size());
  const ContrastiveConfig cc = config.contrastive_config();
  const bool with_con = config.contrastive && dataset.size() >= 2;
  double mse_sum = 0.0, con_sum = 0.0;
  for (const auto& idx :
       split_batches(identity_order(dataset.size()), config.batch_size)) {
    ModalityBatch batch = make_batch(dataset, idx, config.zero_nonverbal);
    Tape tape(false);
    ForwardResult r = model.forward(tape, batch);
    auto p = r.prediction.data();
    ev.predictions.insert(ev.predictions.end(), p.begin(), p.end());
    const double w = static_cast<double>(idx.size());
    mse_sum += w * mse_loss(tape, r.prediction, batch.labels).item();
    if (with_con) {
      con_sum += w * pairwise_contrastive_loss(tape, r.text.final,
                                               r.visual.final,
                                               r.acoustic.final, batch.labels,
                                               cc)
                         .item();
    }
  }
  const double n = static_cast<double>(dataset.size());
  ev.mse = mse_sum / n;
  ev.con = con_sum / n;
  std::vector<double> labels;
  labels.reserve(dataset.size());
  for (const auto& rec : dataset.records) labels.push_back(rec.label);
  ev.metrics = compute_metrics(ev.predictions, labels);
  return ev;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (val_set.empty()) throw DataError("validation set is empty");
  if (config.contrastive && train_set.size() < 2) {
    throw DataError("contrastive training needs at least 2 samples");
  }
  Model model = Model::init(config.model, config.seed, config.cms_mode);
  const std::vector<NamedTensor> params = model.parameters();
  AdamW optimizer({0.9, 0.999, 1e-8, config.weight_decay});
  Rng order_rng(config.seed ^ 0x5eedf00dULL);
  const ContrastiveConfig cc = config.contrastive_config();

  TrainResult result;
  EmaState& ema = result.ema;
  ema.momentum = config.ema_momentum;
  if (!config.contrastive) {
    ema.nu = 0.0;
  } else if (!config.ema) {
    ema.nu = 1.0;
  } else {
    const Evaluation initial = evaluate_model(model, val_set, config);
    ema = ema_update(ema, initial.mse, initial.con);
  }

  result.best_model = model.clone();
  double best_mae = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = identity_order(train_set.size());
  for (std::size_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_schedule(epoch, config.warmup_epochs, config.total_epochs,
                         config.lr);
    log.nu = ema.nu;
    shuffle(order, order_rng);
    double mse_sum = 0.0, con_sum = 0.0;
    for (const auto& idx : split_batches(order, config.batch_size)) {
      ModalityBatch batch = make_batch(train_set, idx, config.zero_nonverbal);
      Tape tape;
      ForwardResult r = model.forward(tape, batch);
      Tensor mse = mse_loss(tape, r.prediction, batch.labels);
      Tensor loss = mse;
      double con_value = 0.0;
      if (config.contrastive && idx.size() >= 2) {
        Tensor con = pairwise_contrastive_loss(
            tape, r.text.final, r.visual.final, r.acoustic.final, batch.labels,
            cc);
        con_value = con.item();
        loss = ag::add(tape, mse, ag::scale(tape, con, ema.nu));
      }
      if (!std::isfinite(loss.item())) {
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch) + " (mse " +
                             format_g(mse.item(), 6) + ", con " +
                             format_g(con_value, 6) + ")");
      }
      tape.backward(loss);
      optimizer.step(params, log.lr);
      for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
      const double w = static_cast<double>(idx.size());
      mse_sum += w * mse.item();
      con_sum += w * con_value;
    }
    const double n = static_cast<double>(train_set.size());
    log.train_mse = mse_sum / n;
    log.train_con = con_sum / n;

    const Evaluation val = evaluate_model(model, val_set, config);
    log.val_mse = val.mse;
    log.val_con = val.con;
    log.val_mae = val.metrics.mae;
    log.val_pearson = val.metrics.pearson;
    if (!std::isfinite(val.mse)) {
      throw NumericalError("non-finite validation loss at epoch " +
                           std::to_string(epoch));
    }
    if (config.contrastive && config.ema) {
      ema = ema_update(ema, val.mse, val.con);
    }
    if (val.metrics.mae < best_mae) {
      best_mae = val.metrics.mae;
      result.best_model.copy_values_from(model);
      result.best_epoch = epoch;
      result.best_val = val.metrics;
    }
    result.log.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }
  result.final_model = std::move(model);
  result.rng_state = order_rng.state();
  return result;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json params = json::array();
  std::size_t total = 0;
  for (const auto& p : ck.model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    total += p.tensor.numel();
  }
  json header{{"config", json::parse(config_to_json(ck.config, -1))},
              {"params", params},
              {"numel", total},
              {"ema",
               {{"nu", ck.ema.nu},
                {"momentum", ck.ema.momentum},
                {"initialized", ck.ema.initialized}}},
              {"epoch", ck.epoch},
              {"rng_state", ck.rng_state}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : ck.model.parameters()) {
    for (double v : p.tensor.data()) {
      write_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path + " is not a cmsclr checkpoint");
  }
  const std::uint64_t length = read_u64(in);
  if (length > (1ULL << 30)) throw DataError("checkpoint header too large");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw DataError("checkpoint truncated");
  }
  Checkpoint ck;
  json header;
  try {
    header = json::parse(text);
    ck.config = config_from_json(header.at("config").dump());
    const json& e = header.at("ema");
    ck.ema.nu = e.at("nu").get<double>();
    ck.ema.momentum = e.at("momentum").get<double>();
    ck.ema.initialized = e.at("initialized").get<bool>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError("checkpoint header: " + std::string(e.what()));
  }
  ck.config.validate();
  ck.model = Model::init(ck.config.model, 0, ck.config.cms_mode);
  const auto params = ck.model.parameters();
  const json& listed = header.at("params");
  if (listed.size() != params.size()) {
    throw DataError("checkpoint lists " + std::to_string(listed.size()) +
                    " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string name = listed[k].at("name").get<std::string>();
    const Shape shape = listed[k].at("shape").get<Shape>();
    if (name != params[k].name || shape != params[k].tensor.shape()) {
      throw DataError("checkpoint parameter " + name + " " + shape_str(shape) +
                      " does not match " + params[k].name + " " +
                      shape_str(params[k].tensor.shape()));
    }
    Tensor t = params[k].tensor;
    for (double& v : t.mutable_data()) {
      v = std::bit_cast<double>(read_u64(in));
    }
  }
  return ck;
}

void export_embeddings(const Model& model, const Dataset& dataset,
                       const TrainConfig& config, const std::string& path) {
  if (dataset.empty()) throw DataError("nothing to export");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::size_t d = model.config().width;
  out << "id\tmodality\tlabel";
  for (std::size_t k = 0; k < d; ++k) out << "\te" << k;
  out << '\n';
  for (const auto& idx :
       split_batches(identity_order(dataset.size()), config.batch_size)) {
    ModalityBatch batch = make_batch(dataset, idx, config.zero_nonverbal);
    Tape tape(false);
    ForwardResult r = model.forward(tape, batch);
    for (std::size_t s = 0; s < batch.size; ++s) {
      const std::pair<const char*, const Tensor*> rows[] = {
          {"l", &r.text.final}, {"v", &r.visual.final}, {"a", &r.acoustic.final}};
      for (const auto& [name, z] : rows) {
        out << batch.ids[s] << '\t' << name << '\t'
            << format_g(batch.labels[s], 12);
        auto v = z->data();
        for (std::size_t k = 0; k < d; ++k) out << '\t' << format_g(v[s * d + k], 12);
        out << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<CmsMap> cms_maps(const Model& model, const Dataset& dataset,
                             const TrainConfig& config, std::size_t layer) {
  if (layer >= model.config().num_layers) {
    throw ConfigError("layer " + std::to_string(layer) + " out of range for " +
                      std::to_string(model.config().num_layers) + " layers");
  }
  if (!model.schedule().active(layer)) {
    throw ConfigError("CMS is not active at layer " + std::to_string(layer) +
                      " under cms_mode " + model.schedule().str());
  }
  std::vector<CmsMap> maps;
  const std::size_t d = model.config().width;
  for (const auto& idx :
       split_batches(identity_order(dataset.size()), config.batch_size)) {
    ModalityBatch batch = make_batch(dataset, idx, config.zero_nonverbal);
    Tape tape(false);
    CmsProbe probe;
    ForwardOptions opts;
    opts.probe = &probe;
    model.forward(tape, batch, opts);
    const CmsShift& s = *probe.layers[layer];
    const std::size_t n = batch.seq_len, mv = batch.visual_mask.dim(1),
                      ma = batch.acoustic_mask.dim(1);
    auto gv = s.visual_gates.data(), ga = s.acoustic_gates.data();
    auto vv = s.visual_values.data(), va = s.acoustic_values.data();
    auto tm = batch.text_mask.data(), vm = batch.visual_mask.data(),
         am = batch.acoustic_mask.data();
    for (std::size_t b = 0; b < batch.size; ++b) {
      const auto& rec = dataset.records[idx[b]];
      CmsMap map;
      map.id = rec.id;
      map.rows = rec.tokens.size();
      map.cols = std::max(rec.visual_frames, rec.acoustic_frames);
      for (std::size_t i = 0; i < n; ++i) {
        if (tm[b * n + i] == 0.0) continue;
        for (std::size_t j = 0; j < map.cols; ++j) {
          double norm2 = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            double a = 0.0;
            if (j < mv && vm[b * mv + j] != 0.0) {
              a += gv[(b * n + i) * mv + j] * vv[(b * mv + j) * d + k];
            }
            if (j < ma && am[b * ma + j] != 0.0) {
              a += ga[(b * n + i) * ma + j] * va[(b * ma + j) * d + k];
            }
            norm2 += a * a;
          }
          map.values.push_back(std::sqrt(norm2));
        }
      }
      maps.push_back(std::move(map));
    }
  }
  return maps;
}

std::vector<std::string> dump_cms_maps(const Model& model,
                                       const Dataset& dataset,
                                       const TrainConfig& config,
                                       std::size_t layer,
                                       const std::string& out_dir) {
  const std::vector<CmsMap> maps = cms_maps(model, dataset, config, layer);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  std::vector<std::string> paths;
  for (std::size_t s = 0; s < maps.size(); ++s) {
    const CmsMap& m = maps[s];
    const std::string path = (std::filesystem::path(out_dir) /
                              (std::to_string(s) + "_" + sanitize(m.id) +
                               ".layer" + std::to_string(layer) + ".csv"))
                                 .string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < m.cols; ++j) {
        if (j) out << ',';
        out << format_g(m.values[i * m.cols + j], 12);
      }
      out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace cmsclr
