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

#include "cmsclr/cmsclr.h"

#include <cstring>
#include <new>
#include <string>

#include "cmsclr/cms.hpp"
#include "cmsclr/error.hpp"
#include "cmsclr/trainer.hpp"
#include "cmsclr/verify.hpp"

struct cmsclr_config {
  cmsclr::TrainConfig value;
};

struct cmsclr_dataset {
  cmsclr::Dataset value;
};

struct cmsclr_model {
  cmsclr::Checkpoint value;
};

namespace {

thread_local std::string last_error;

cmsclr_status fail(cmsclr_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
cmsclr_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return CMSCLR_OK;
  } catch (const cmsclr::ConfigError& e) {
    return fail(CMSCLR_ERR_CONFIG, e.what());
  } catch (const cmsclr::ParseError& e) {
    return fail(CMSCLR_ERR_PARSE, e.what());
  } catch (const cmsclr::DataError& e) {
    return fail(CMSCLR_ERR_DATA, e.what());
  } catch (const cmsclr::IoError& e) {
    return fail(CMSCLR_ERR_IO, e.what());
  } catch (const cmsclr::ShapeError& e) {
    return fail(CMSCLR_ERR_SHAPE, e.what());
  } catch (const cmsclr::DomainError& e) {
    return fail(CMSCLR_ERR_DOMAIN, e.what());
  } catch (const cmsclr::DegenerateInputError& e) {
    return fail(CMSCLR_ERR_DEGENERATE, e.what());
  } catch (const cmsclr::UsageError& e) {
    return fail(CMSCLR_ERR_USAGE, e.what());
  } catch (const cmsclr::NumericalError& e) {
    return fail(CMSCLR_ERR_NUMERICAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CMSCLR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CMSCLR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CMSCLR_ERR_INTERNAL, "unknown error");
  }
}

#define CMSCLR_REQUIRE(cond)                                              \
  do {                                                                    \
    if (!(cond)) {                                                        \
      return fail(CMSCLR_ERR_INVALID_ARGUMENT, "invalid argument: " #cond); \
    }                                                                     \
  } while (0)

cmsclr::TrainConfig base_config(const char* preset) {
  return preset ? cmsclr::preset(preset) : cmsclr::TrainConfig{};
}

}  // namespace

extern "C" {

const char* cmsclr_last_error(void) { return last_error.c_str(); }

const char* cmsclr_status_name(cmsclr_status status) {
  switch (status) {
    case CMSCLR_OK: return "ok";
    case CMSCLR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CMSCLR_ERR_CONFIG: return "config error";
    case CMSCLR_ERR_DATA: return "data error";
    case CMSCLR_ERR_PARSE: return "parse error";
    case CMSCLR_ERR_IO: return "io error";
    case CMSCLR_ERR_SHAPE: return "shape error";
    case CMSCLR_ERR_DOMAIN: return "domain error";
    case CMSCLR_ERR_DEGENERATE: return "degenerate input";
    case CMSCLR_ERR_USAGE: return "usage error";
    case CMSCLR_ERR_NUMERICAL: return "numerical error";
    case CMSCLR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

cmsclr_status cmsclr_config_create(const char* preset, cmsclr_config** out) {
  CMSCLR_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new cmsclr_config{base_config(preset)}; });
}

cmsclr_status cmsclr_config_load(const char* path, const char* preset,
                                 cmsclr_config** out) {
  CMSCLR_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] {
    *out = new cmsclr_config{cmsclr::load_config(path, base_config(preset))};
  });
}

cmsclr_status cmsclr_config_merge_json(cmsclr_config* config,
                                       const char* json) {
  CMSCLR_REQUIRE(config && json);
  return guarded(
      [&] { config->value = cmsclr::config_from_json(json, config->value); });
}

cmsclr_status cmsclr_config_set_seed(cmsclr_config* config, uint64_t seed) {
  CMSCLR_REQUIRE(config);
  config->value.seed = seed;
  return CMSCLR_OK;
}

cmsclr_status cmsclr_config_validate(const cmsclr_config* config) {
  CMSCLR_REQUIRE(config);
  return guarded([&] { config->value.validate(); });
}

cmsclr_status cmsclr_config_to_json(const cmsclr_config* config, char* buffer,
                                    size_t capacity, size_t* needed) {
  CMSCLR_REQUIRE(config);
  std::string text;
  cmsclr_status st =
      guarded([&] { text = cmsclr::config_to_json(config->value); });
  if (st != CMSCLR_OK) return st;
  if (needed) *needed = text.size() + 1;
  if (!buffer || capacity < text.size() + 1) {
    return fail(CMSCLR_ERR_INVALID_ARGUMENT, "buffer too small for config JSON");
  }
  std::memcpy(buffer, text.c_str(), text.size() + 1);
  return CMSCLR_OK;
}

void cmsclr_config_free(cmsclr_config* config) { delete config; }

cmsclr_status cmsclr_generate_synthetic(const cmsclr_config* config,
                                        uint64_t seed, const char* prefix) {
  CMSCLR_REQUIRE(config && prefix);
  return guarded([&] {
    config->value.validate();
    cmsclr::write_synthetic(
        cmsclr::generate_synthetic(seed, config->value.synthetic_config()),
        prefix);
  });
}

cmsclr_status cmsclr_dataset_load(const char* path, const cmsclr_config* config,
                                  cmsclr_dataset** out) {
  CMSCLR_REQUIRE(path && config && out);
  *out = nullptr;
  return guarded([&] {
    *out = new cmsclr_dataset{cmsclr::load_jsonl(path, config->value.widths())};
  });
}

size_t cmsclr_dataset_size(const cmsclr_dataset* dataset) {
  return dataset ? dataset->value.size() : 0;
}

void cmsclr_dataset_free(cmsclr_dataset* dataset) { delete dataset; }

cmsclr_status cmsclr_model_create(const cmsclr_config* config,
                                  cmsclr_model** out) {
  CMSCLR_REQUIRE(config && out);
  *out = nullptr;
  return guarded([&] {
    config->value.validate();
    cmsclr::Checkpoint ck;
    ck.config = config->value;
    ck.model = cmsclr::Model::init(ck.config.model, ck.config.seed,
                                   ck.config.cms_mode);
    *out = new cmsclr_model{std::move(ck)};
  });
}

cmsclr_status cmsclr_train(const cmsclr_config* config,
                           const cmsclr_dataset* train,
                           const cmsclr_dataset* val, const char* log_path,
                           cmsclr_epoch_callback callback, void* user_data,
                           cmsclr_model** out) {
  CMSCLR_REQUIRE(config && train && val && out);
  *out = nullptr;
  return guarded([&] {
    cmsclr::TrainHooks hooks;
    if (callback) {
      hooks.on_epoch = [&](const cmsclr::EpochLog& e) {
        const cmsclr_epoch_log log{e.epoch,   e.lr,      e.train_mse,
                                   e.train_con, e.nu,    e.val_mse,
                                   e.val_con, e.val_mae, e.val_pearson};
        callback(&log, user_data);
      };
    }
    cmsclr::TrainResult r =
        cmsclr::train(config->value, train->value, val->value, hooks);
    if (log_path) cmsclr::write_epoch_log(log_path, r.log);
    cmsclr::Checkpoint ck;
    ck.config = config->value;
    ck.model = std::move(r.best_model);
    ck.ema = r.ema;
    ck.epoch = r.best_epoch;
    ck.rng_state = r.rng_state;
    *out = new cmsclr_model{std::move(ck)};
  });
}

cmsclr_status cmsclr_model_save(const cmsclr_model* model, const char* path) {
  CMSCLR_REQUIRE(model && path);
  return guarded([&] { cmsclr::save_checkpoint(path, model->value); });
}

cmsclr_status cmsclr_model_load(const char* path, cmsclr_model** out) {
  CMSCLR_REQUIRE(path && out);
  *out = nullptr;
  return guarded(
      [&] { *out = new cmsclr_model{cmsclr::load_checkpoint(path)}; });
}

cmsclr_status cmsclr_model_config(const cmsclr_model* model,
                                  cmsclr_config** out) {
  CMSCLR_REQUIRE(model && out);
  *out = nullptr;
  return guarded([&] { *out = new cmsclr_config{model->value.config}; });
}

size_t cmsclr_model_parameter_count(const cmsclr_model* model) {
  return model ? model->value.model.parameter_count() : 0;
}

void cmsclr_model_free(cmsclr_model* model) { delete model; }

cmsclr_status cmsclr_evaluate(const cmsclr_model* model,
                              const cmsclr_dataset* dataset,
                              cmsclr_metrics* out) {
  CMSCLR_REQUIRE(model && dataset && out);
  return guarded([&] {
    const cmsclr::MetricsReport m =
        cmsclr::evaluate_model(model->value.model, dataset->value,
                               model->value.config)
            .metrics;
    *out = {m.mae,
            m.pearson,
            m.acc2_nonneg,
            m.acc2_posneg,
            m.f1_weighted_nonneg,
            m.f1_weighted_posneg,
            m.n_eval,
            m.n_posneg};
  });
}

cmsclr_status cmsclr_predict(const cmsclr_model* model,
                             const cmsclr_dataset* dataset, double* out,
                             size_t capacity) {
  CMSCLR_REQUIRE(model && dataset && out);
  CMSCLR_REQUIRE(capacity >= dataset->value.size());
  return guarded([&] {
    const auto ev = cmsclr::evaluate_model(model->value.model, dataset->value,
                                           model->value.config);
    std::memcpy(out, ev.predictions.data(),
                ev.predictions.size() * sizeof(double));
  });
}

cmsclr_status cmsclr_gradcheck(const cmsclr_config* config, double step,
                               double* max_rel_error, size_t* coordinates) {
  CMSCLR_REQUIRE(config && max_rel_error);
  return guarded([&] {
    const cmsclr::GradCheckReport r =
        cmsclr::model_gradcheck(config->value, step);
    *max_rel_error = r.max_rel_error;
    if (coordinates) *coordinates = r.coordinates;
  });
}

cmsclr_status cmsclr_mag_check(uint64_t seed, double* deviation) {
  CMSCLR_REQUIRE(deviation);
  return guarded([&] { *deviation = cmsclr::mag_reduction_check(seed); });
}

cmsclr_status cmsclr_export_embeddings(const cmsclr_model* model,
                                       const cmsclr_dataset* dataset,
                                       const char* path) {
  CMSCLR_REQUIRE(model && dataset && path);
  return guarded([&] {
    cmsclr::export_embeddings(model->value.model, dataset->value,
                              model->value.config, path);
  });
}

cmsclr_status cmsclr_dump_cms_maps(const cmsclr_model* model,
                                   const cmsclr_dataset* dataset, size_t layer,
                                   const char* out_dir,
                                   size_t* files_written) {
  CMSCLR_REQUIRE(model && dataset && out_dir);
  return guarded([&] {
    const auto paths =
        cmsclr::dump_cms_maps(model->value.model, dataset->value,
                              model->value.config, layer, out_dir);
    if (files_written) *files_written = paths.size();
  });
}

}  // extern "C"
