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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "cmsclr/error.hpp"
#include "cmsclr/fusion.hpp"
#include "cmsclr/losses.hpp"
#include "cmsclr/model.hpp"
#include "helpers.hpp"

using namespace cmsclr;
using testutil::values;

TEST_CASE("fuse stacks l, v, a in order") {
  Tape tape(false);
  Tensor l = Tensor::full({5, 32}, 1.0);
  Tensor v = Tensor::full({5, 32}, 2.0);
  Tensor a = Tensor::full({5, 32}, 3.0);
  Tensor z = fuse(tape, l, v, a);
  CHECK(z.shape() == Shape{5, 3, 32});
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t slot = 0; slot < 3; ++slot)
      for (std::size_t k = 0; k < 32; ++k)
        CHECK(z[(s * 3 + slot) * 32 + k] == static_cast<double>(slot + 1));
  CHECK_THROWS_AS(fuse(tape, l, Tensor::zeros({5, 31}), a), ShapeError);
}

TEST_CASE("fuse backward splits evenly") {
  Rng rng(1);
  Tensor l = random_tensor({2, 4}, rng, -1, 1, true);
  Tensor v = random_tensor({2, 4}, rng, -1, 1, true);
  Tensor a = random_tensor({2, 4}, rng, -1, 1, true);
  Tape tape;
  tape.backward(ag::sum(tape, fuse(tape, l, v, a)));
  for (const Tensor* t : {&l, &v, &a})
    for (double g : t->grad()) CHECK(g == 1.0);
}

TEST_CASE("zeroed transformer and first predictor layer give the output bias") {
  Rng rng(2);
  FusionParams p = FusionParams::init(6, 2, rng);
  std::vector<NamedTensor> named;
  p.collect("", named);
  for (auto& n : named) {
    if (n.name == "b2") continue;
    std::fill(n.tensor.mutable_data().begin(), n.tensor.mutable_data().end(), 0.0);
  }
  p.b2.mutable_data()[0] = 0.625;
  Tape tape(false);
  Tensor y = fusion_forward(tape, random_tensor({4, 3, 6}, rng), p);
  CHECK(y.shape() == Shape{4});
  for (double v : y.data()) CHECK(v == 0.625);
}

TEST_CASE("fusion gradient check") {
  Rng rng(3);
  FusionParams p = FusionParams::init(6, 2, rng);
  for (Tensor* t : {&p.b1, &p.block.ffn_in_bias, &p.block.ffn_out_bias})
    for (double& v : t->mutable_data()) v = rng.uniform(-0.3, 0.3);
  Tensor z = random_tensor({3, 3, 6}, rng, -1, 1, true);
  std::vector<NamedTensor> in = {{"z", z}};
  p.collect("", in);
  auto r = finite_diff_check(
      [&](Tape& t) {
        Tensor y = fusion_forward(t, z, p);
        return ag::sum(t, ag::mul(t, y, y));
      },
      in, 1e-5);
  CAPTURE(r.worst_tensor);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("swapping visual and acoustic slots changes the prediction") {
  Rng rng(4);
  FusionParams p = FusionParams::init(8, 2, rng);
  Tensor l = random_tensor({3, 8}, rng);
  Tensor v = random_tensor({3, 8}, rng);
  Tensor a = random_tensor({3, 8}, rng);
  Tape tape(false);
  const auto y1 = values(fusion_forward(tape, fuse(tape, l, v, a), p));
  const auto y2 = values(fusion_forward(tape, fuse(tape, l, a, v), p));
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(std::isfinite(y1[s]));
    CHECK(y1[s] != y2[s]);
  }
}

TEST_CASE("prediction gradients reach every parameter group") {
  TrainConfig c = testutil::tiny_config();
  Model m = Model::init(c.model, 5);
  ModalityBatch batch = testutil::synthetic_batch(c, 5, 4);
  Tape tape;
  ForwardResult r = m.forward(tape, batch);
  tape.backward(mse_loss(tape, r.prediction, batch.labels));
  std::map<std::string, double> groups;
  for (const auto& p : m.parameters()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    for (double g : p.tensor.grad()) groups[group] += g * g;
  }
  for (const char* g : {"embedder", "visual_projection", "acoustic_projection", "cms",
                        "visual_lstm", "acoustic_lstm", "text_head", "visual_head",
                        "acoustic_head", "fusion"}) {
    CAPTURE(g);
    CHECK(groups[g] > 0.0);
  }
}

TEST_CASE("full model gradient check on a two-sample batch") {
  TrainConfig c = testutil::tiny_config();
  c.model.width = 8;
  c.model.vocab_size = 12;
  c.model.max_seq_len = 4;
  c.synthetic.max_tokens = 4;
  c.synthetic.min_tokens = 2;
  Model m = Model::init(c.model, 6);
  ModalityBatch batch = testutil::synthetic_batch(c, 6, 2);
  EmaState ema;
  ema.nu = 0.5;
  ema.initialized = true;
  auto r = finite_diff_check(
      [&](Tape& t) {
        ForwardResult f = m.forward(t, batch);
        return total_loss(t, f.prediction, batch.labels, f.text.final, f.visual.final,
                          f.acoustic.final, ema, c.contrastive_config());
      },
      m.parameters(), 1e-5);
  CAPTURE(r.worst_tensor);
  CHECK(r.max_rel_error <= 1e-4);
}
