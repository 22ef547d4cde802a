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

#include "cmsclr/verify.hpp"

#include <numeric>

namespace cmsclr {

GradCheckReport model_gradcheck(const TrainConfig& config, double step) {
  config.validate();
  SyntheticConfig sc = config.synthetic_config();
  sc.samples = config.batch_size;
  sc.train_fraction = 1.0;
  sc.val_fraction = 0.0;
  const SyntheticData data = generate_synthetic(config.seed, sc);
  std::vector<std::size_t> all(data.train.data.size());
  std::iota(all.begin(), all.end(), 0);
  const ModalityBatch batch =
      make_batch(data.train.data, all, config.zero_nonverbal);

  const Model model = Model::init(config.model, config.seed, config.cms_mode);
  EmaState ema;
  ema.nu = 0.5;
  ema.initialized = true;
  const ContrastiveConfig cc = config.contrastive_config();
  auto loss = [&](Tape& tape) {
    ForwardResult r = model.forward(tape, batch);
    if (!config.contrastive) return mse_loss(tape, r.prediction, batch.labels);
    return total_loss(tape, r.prediction, batch.labels, r.text.final,
                      r.visual.final, r.acoustic.final, ema, cc);
  };
  return finite_diff_check(loss, model.parameters(), step);
}

}  // namespace cmsclr
