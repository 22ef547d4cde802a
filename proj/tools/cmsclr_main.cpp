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

// cmsclr command-line tool. Exit codes: 0 success, 1 validation or config
// error, 2 numerical failure.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmsclr/cmsclr.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

constexpr double kGradTolerance = 1e-4;
constexpr double kMagTolerance = 1e-10;

struct Failure {
  int code;
};

void check(cmsclr_status st, const char* what) {
  if (st == CMSCLR_OK) return;
  std::fprintf(stderr, "cmsclr: %s failed (%s): %s\n", what,
               cmsclr_status_name(st), cmsclr_last_error());
  throw Failure{st == CMSCLR_ERR_NUMERICAL ? kExitNumerical : kExitInvalid};
}

struct ConfigDeleter {
  void operator()(cmsclr_config* c) const { cmsclr_config_free(c); }
};
struct DatasetDeleter {
  void operator()(cmsclr_dataset* d) const { cmsclr_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(cmsclr_model* m) const { cmsclr_model_free(m); }
};
using ConfigPtr = std::unique_ptr<cmsclr_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<cmsclr_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<cmsclr_model, ModelDeleter>;

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string val;
  std::string checkpoint;
  std::string log;
  std::size_t layer = 0;
  double step = 1e-5;
};

void print_config(const cmsclr_config* config) {
  std::size_t needed = 0;
  cmsclr_config_to_json(config, nullptr, 0, &needed);
  std::vector<char> buf(needed);
  check(cmsclr_config_to_json(config, buf.data(), buf.size(), &needed),
        "config echo");
  std::printf("%s\n", buf.data());
  std::fflush(stdout);
}

ConfigPtr resolve_config(const Options& o) {
  cmsclr_config* raw = nullptr;
  const char* preset = o.preset.empty() ? nullptr : o.preset.c_str();
  if (o.config_path.empty()) {
    check(cmsclr_config_create(preset, &raw), "config");
  } else {
    check(cmsclr_config_load(o.config_path.c_str(), preset, &raw), "config");
  }
  ConfigPtr config(raw);
  if (o.seed) check(cmsclr_config_set_seed(config.get(), *o.seed), "config");
  check(cmsclr_config_validate(config.get()), "config");
  print_config(config.get());
  return config;
}

ModelPtr load_model(const Options& o) {
  cmsclr_model* raw = nullptr;
  check(cmsclr_model_load(o.checkpoint.c_str(), &raw), "checkpoint load");
  ModelPtr model(raw);
  cmsclr_config* cfg = nullptr;
  check(cmsclr_model_config(model.get(), &cfg), "checkpoint config");
  ConfigPtr config(cfg);
  print_config(config.get());
  return model;
}

DatasetPtr load_dataset(const std::string& path, const cmsclr_model* model) {
  cmsclr_config* cfg = nullptr;
  check(cmsclr_model_config(model, &cfg), "checkpoint config");
  ConfigPtr config(cfg);
  cmsclr_dataset* raw = nullptr;
  check(cmsclr_dataset_load(path.c_str(), config.get(), &raw), "dataset load");
  return DatasetPtr(raw);
}

DatasetPtr load_dataset(const std::string& path, const cmsclr_config* config) {
  cmsclr_dataset* raw = nullptr;
  check(cmsclr_dataset_load(path.c_str(), config, &raw), "dataset load");
  return DatasetPtr(raw);
}

int run_gen_data(const Options& o) {
  ConfigPtr config = resolve_config(o);
  const std::uint64_t seed = o.seed.value_or(0);
  check(cmsclr_generate_synthetic(config.get(), seed, o.out.c_str()),
        "gen-data");
  std::printf("wrote %s.{train,val,test}.jsonl and oracle sidecars\n",
              o.out.c_str());
  return kExitOk;
}

void on_epoch(const cmsclr_epoch_log* e, void*) {
  std::printf(
      "epoch %zu lr %.3e train_mse %.6f train_con %.6f nu %.6f val_mae %.6f "
      "val_pearson %.6f\n",
      e->epoch, e->lr, e->train_mse, e->train_con, e->nu, e->val_mae,
      e->val_pearson);
  std::fflush(stdout);
}

int run_train(const Options& o) {
  ConfigPtr config = resolve_config(o);
  DatasetPtr train = load_dataset(o.dataset, config.get());
  DatasetPtr val = o.val.empty() ? nullptr : load_dataset(o.val, config.get());
  if (!val) {
    std::fprintf(stderr, "cmsclr: no --val given, validating on --dataset\n");
  }
  const std::string log = o.log.empty() ? o.out + ".log.csv" : o.log;
  cmsclr_model* raw = nullptr;
  check(cmsclr_train(config.get(), train.get(), val ? val.get() : train.get(),
                     log.c_str(), on_epoch, nullptr, &raw),
        "train");
  ModelPtr model(raw);
  check(cmsclr_model_save(model.get(), o.out.c_str()), "checkpoint save");
  std::printf("saved best checkpoint to %s, epoch log to %s\n", o.out.c_str(),
              log.c_str());
  return kExitOk;
}

int run_eval(const Options& o) {
  ModelPtr model = load_model(o);
  DatasetPtr data = load_dataset(o.dataset, model.get());
  cmsclr_metrics m{};
  check(cmsclr_evaluate(model.get(), data.get(), &m), "eval");
  std::printf(
      "{\"mae\": %.17g, \"pearson\": %.17g, \"acc2_nonneg\": %.17g, "
      "\"acc2_posneg\": %.17g, \"f1_weighted_nonneg\": %.17g, "
      "\"f1_weighted_posneg\": %.17g, \"n_eval\": %zu, \"n_posneg\": %zu}\n",
      m.mae, m.pearson, m.acc2_nonneg, m.acc2_posneg, m.f1_weighted_nonneg,
      m.f1_weighted_posneg, m.n_eval, m.n_posneg);
  return kExitOk;
}

int run_gradcheck(const Options& o) {
  ConfigPtr config = resolve_config(o);
  double err = 0.0;
  std::size_t coords = 0;
  check(cmsclr_gradcheck(config.get(), o.step, &err, &coords), "gradcheck");
  std::printf("gradcheck: %zu coordinates, max rel. err %.3e (tolerance %.0e)\n",
              coords, err, kGradTolerance);
  return err <= kGradTolerance ? kExitOk : kExitNumerical;
}

int run_mag_check(const Options& o) {
  ConfigPtr config = resolve_config(o);
  double dev = 0.0;
  check(cmsclr_mag_check(o.seed.value_or(0), &dev), "mag-check");
  std::printf("mag-check: max abs deviation %.3e (tolerance %.0e)\n", dev,
              kMagTolerance);
  return dev <= kMagTolerance ? kExitOk : kExitNumerical;
}

int run_export(const Options& o) {
  ModelPtr model = load_model(o);
  DatasetPtr data = load_dataset(o.dataset, model.get());
  check(cmsclr_export_embeddings(model.get(), data.get(), o.out.c_str()),
        "export-embeddings");
  std::printf("wrote %zu rows to %s\n", 3 * cmsclr_dataset_size(data.get()),
              o.out.c_str());
  return kExitOk;
}

int run_dump_maps(const Options& o) {
  ModelPtr model = load_model(o);
  DatasetPtr data = load_dataset(o.dataset, model.get());
  std::size_t files = 0;
  check(cmsclr_dump_cms_maps(model.get(), data.get(), o.layer, o.out.c_str(),
                             &files),
        "dump-cms-maps");
  std::printf("wrote %zu CMS maps for layer %zu to %s\n", files, o.layer,
              o.out.c_str());
  return kExitOk;
}

void add_config_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--preset", o.preset, "desk, mosi-paper or mosei-paper")
      ->check(CLI::IsMember({"desk", "mosi-paper", "mosei-paper"}));
  cmd->add_option("--seed", o.seed, "overrides the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmsclr: context-driven modality shifting with contrastive "
               "learning for multimodal sentiment regression"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  add_config_flags(gen, o);
  gen->add_option("--out", o.out, "output prefix")->required();

  auto* train = app.add_subcommand("train", "train and save the best model");
  add_config_flags(train, o);
  train->add_option("--dataset", o.dataset, "training JSONL")->required();
  train->add_option("--val", o.val, "validation JSONL");
  train->add_option("--out", o.out, "checkpoint path")->required();
  train->add_option("--log", o.log, "epoch log CSV (default <out>.log.csv)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--dataset", o.dataset)->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check");
  add_config_flags(grad, o);
  grad->add_option("--step", o.step, "central difference step");

  auto* mag = app.add_subcommand("mag-check", "single-shift reduction check");
  add_config_flags(mag, o);

  auto* exp = app.add_subcommand("export-embeddings", "write z rows as TSV");
  exp->add_option("--checkpoint", o.checkpoint)->required();
  exp->add_option("--dataset", o.dataset)->required();
  exp->add_option("--out", o.out)->required();

  auto* maps = app.add_subcommand("dump-cms-maps", "write per-sample ||a_ij||");
  maps->add_option("--checkpoint", o.checkpoint)->required();
  maps->add_option("--dataset", o.dataset)->required();
  maps->add_option("--layer", o.layer)->required();
  maps->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*gen) return run_gen_data(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*grad) return run_gradcheck(o);
    if (*mag) return run_mag_check(o);
    if (*exp) return run_export(o);
    if (*maps) return run_dump_maps(o);
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitInvalid;
}
