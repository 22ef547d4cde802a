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
#include <string>

#include "cmsclr/error.hpp"
#include "cmsclr/losses.hpp"
#include "cmsclr/model.hpp"
#include "cmsclr/subnetworks.hpp"
#include "helpers.hpp"

using namespace cmsclr;
using testutil::values;

namespace {

void fill(Tensor& t, double v) {
  std::fill(t.mutable_data().begin(), t.mutable_data().end(), v);
}

double grad_norm(const Tensor& t) {
  double s = 0;
  for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("embedder: zero tables, lookup, position add") {
  Rng rng(1);
  TokenEmbedder e = TokenEmbedder::init(6, 4, 3, rng);
  const std::vector<int> tokens = {5, 2, 0, 2};
  Tape tape(false);
  Tensor x = embed_tokens(tape, e, tokens, 2, 2);
  CHECK(x.shape() == Shape{2, 2, 3});
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        const int tok = tokens[s * 2 + i];
        CHECK(x[(s * 2 + i) * 3 + k] == e.table[tok * 3 + k] + e.positions[i * 3 + k]);
      }
  fill(e.table, 0.0);
  fill(e.positions, 0.0);
  Tensor zero = embed_tokens(tape, e, tokens, 2, 2);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("embedder: untouched rows get no gradient") {
  Rng rng(2);
  TokenEmbedder e = TokenEmbedder::init(8, 4, 3, rng);
  const std::vector<int> tokens = {1, 3, 3};
  Tape tape;
  tape.backward(ag::sum(tape, embed_tokens(tape, e, tokens, 1, 3)));
  const auto g = e.table.grad();
  for (int r = 0; r < 8; ++r) {
    const double expect = r == 1 ? 1.0 : (r == 3 ? 2.0 : 0.0);
    for (int k = 0; k < 3; ++k) CHECK(g[r * 3 + k] == expect);
  }
}

TEST_CASE("embedder: out-of-range ids are data errors naming the index") {
  Rng rng(3);
  TokenEmbedder e = TokenEmbedder::init(5, 4, 2, rng);
  Tape tape(false);
  const std::vector<int> bad = {1, 2, 9};
  try {
    embed_tokens(tape, e, bad, 1, 3);
    FAIL("expected DataError");
  } catch (const DataError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("index 2") != std::string::npos);
  }
  const std::vector<int> neg = {-1};
  CHECK_THROWS_AS(embed_tokens(tape, e, neg, 1, 1), DataError);
  const std::vector<int> too_long = {1, 1, 1, 1, 1};
  CHECK_THROWS_AS(embed_tokens(tape, e, too_long, 1, 5), DataError);
}

TEST_CASE("LSTM: closed gates give a zero sequence") {
  Rng rng(4);
  LstmParams p = LstmParams::init(3, 4, rng);
  auto b = p.bias.mutable_data();
  for (std::size_t k = 0; k < 4; ++k) {
    b[k] = -60.0;      // input gate
    b[12 + k] = -60.0; // output gate
  }
  Tensor seq = random_tensor({2, 5, 3}, rng);
  Tape tape(false);
  Tensor h = lstm_forward(tape, seq, Tensor::full({2, 5}, 1.0), p);
  for (double v : h.data()) CHECK(std::abs(v) < 1e-20);
}

TEST_CASE("LSTM: forget bias starts at one") {
  Rng rng(5);
  LstmParams p = LstmParams::init(3, 4, rng);
  for (std::size_t k = 0; k < 16; ++k) CHECK(p.bias[k] == (k >= 4 && k < 8 ? 1.0 : 0.0));
}

TEST_CASE("LSTM: scalar unit matches the hand recurrence") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    LstmParams p = LstmParams::init(1, 1, rng);
    for (Tensor* t : {&p.input_weights, &p.recurrent_weights, &p.bias})
      for (double& v : t->mutable_data()) v = rng.uniform(-1.5, 1.5);
    const oracle::ScalarLstm o{p.input_weights[0], p.input_weights[1], p.input_weights[2],
                               p.input_weights[3], p.recurrent_weights[0], p.recurrent_weights[1],
                               p.recurrent_weights[2], p.recurrent_weights[3], p.bias[0],
                               p.bias[1], p.bias[2], p.bias[3]};
    Tensor seq = random_tensor({1, 3, 1}, rng);
    Tape tape(false);
    Tensor h = lstm_forward(tape, seq, Tensor::full({1, 3}, 1.0), p);
    double hh = 0, cc = 0;
    for (std::size_t t = 0; t < 3; ++t) {
      oracle::lstm_step(o, seq[t], hh, cc);
      CHECK(std::abs(h[t] - hh) <= 1e-15);
    }
  }
}

TEST_CASE("LSTM: masked tail leaves the pooled output unchanged") {
  Rng rng(6);
  LstmParams p = LstmParams::init(3, 4, rng);
  Tensor seq = random_tensor({1, 3, 3}, rng);
  Tensor longer = random_tensor({1, 6, 3}, rng);
  for (std::size_t i = 0; i < 9; ++i) longer.mutable_data()[i] = seq[i];
  Tape tape(false);
  Tensor m3 = Tensor::full({1, 3}, 1.0);
  Tensor m6 = testutil::prefix_mask(6, {3});
  Tensor h3 = lstm_forward(tape, seq, m3, p);
  Tensor h6 = lstm_forward(tape, longer, m6, p);
  CHECK(values(ag::masked_mean(tape, h3, m3)) == values(ag::masked_mean(tape, h6, m6)));
  // carried states repeat the last valid step
  for (std::size_t t = 3; t < 6; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(h6[t * 4 + k] == h3[2 * 4 + k]);
}

TEST_CASE("LSTM gradient check") {
  Rng rng(7);
  LstmParams p = LstmParams::init(3, 4, rng);
  Tensor seq = random_tensor({2, 4, 3}, rng, -1, 1, true);
  Tensor mask = testutil::prefix_mask(4, {4, 2});
  Tensor w = random_tensor({2, 4, 4}, rng);
  std::vector<NamedTensor> in = {{"seq", seq}};
  p.collect("", in);
  auto r = finite_diff_check(
      [&](Tape& t) { return ag::sum(t, ag::mul(t, lstm_forward(t, seq, mask, p), w)); },
      in, 1e-5);
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("subnetwork: identity head and constant sequences") {
  const std::size_t d = 4;
  Rng rng(8);
  ProjectionHead head = ProjectionHead::init(d, rng);
  fill(head.w1, 0.0);
  fill(head.w2, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    head.w1.mutable_data()[k * d + k] = 1.0;
    head.w2.mutable_data()[k * d + k] = 1.0;
  }
  Tensor hidden = random_tensor({2, 3, d}, rng, 0.0, 1.0);
  Tensor mask = testutil::prefix_mask(3, {3, 1});
  Tape tape(false);
  SubnetworkOutput out = subnetwork_forward(tape, hidden, mask, head);
  CHECK(values(out.final) == values(out.pooled));
  CHECK(values(out.middle) == values(out.pooled));

  std::vector<double> c;
  for (int i = 0; i < 3; ++i)
    for (double v : {0.5, -0.25, 1.0, 2.0}) c.push_back(v);
  Tensor constant = Tensor::from({1, 3, d}, c);
  CHECK(values(subnetwork_forward(tape, constant, Tensor::full({1, 3}, 1.0), head).pooled) ==
        std::vector<double>{0.5, -0.25, 1.0, 2.0});
  CHECK_THROWS_AS(subnetwork_forward(tape, hidden, testutil::prefix_mask(3, {2, 0}), head),
                  DegenerateInputError);
}

TEST_CASE("subnetwork gradient check") {
  Rng rng(9);
  ProjectionHead head = ProjectionHead::init(5, rng);
  for (Tensor* t : {&head.b1, &head.b2})
    for (double& v : t->mutable_data()) v = rng.uniform(0.1, 0.5);
  LstmParams lstm = LstmParams::init(3, 5, rng);
  Tensor seq = random_tensor({2, 4, 3}, rng, -1, 1, true);
  Tensor mask = testutil::prefix_mask(4, {3, 4});
  std::vector<NamedTensor> in = {{"seq", seq}};
  head.collect("head.", in);
  lstm.collect("lstm.", in);
  auto r = finite_diff_check(
      [&](Tape& t) {
        SubnetworkOutput o = subnetwork_forward(t, lstm_forward(t, seq, mask, lstm), mask, head);
        return ag::add(t, ag::sum(t, ag::mul(t, o.final, o.final)), ag::sum(t, o.middle));
      },
      in, 1e-5);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("nonverbal projection") {
  Rng rng(10);
  Tape tape(false);
  Tensor raw = random_tensor({2, 3, 4}, rng);
  std::vector<double> eye(16, 0.0);
  for (int k = 0; k < 4; ++k) eye[k * 4 + k] = 1.0;
  CHECK(values(project_nonverbal_features(tape, raw, Tensor::from({4, 4}, eye))) ==
        values(raw));
  CHECK_THROWS_AS(project_nonverbal_features(tape, raw, Tensor::zeros({5, 4})), ConfigError);
}

TEST_CASE("zero projections reduce the whole model to plain attention") {
  TrainConfig c = testutil::tiny_config();
  Model m = Model::init(c.model, 3);
  fill(m.visual_projection, 0.0);
  fill(m.acoustic_projection, 0.0);
  ModalityBatch batch = testutil::synthetic_batch(c, 3, 4);
  Tape tape(false);
  ForwardOptions off;
  off.schedule = CmsSchedule::off();
  CHECK(values(m.forward(tape, batch).prediction) ==
        values(m.forward(tape, batch, off).prediction));
}

TEST_CASE("raw feature widths of the paper presets are accepted") {
  TrainConfig c = preset("mosi-paper");
  CHECK(c.model.visual_dim == 47);
  CHECK(c.model.acoustic_dim == 74);
  CHECK(preset("mosei-paper").model.visual_dim == 35);
  CHECK(preset("mosei-paper").model.acoustic_dim == 74);
  // same raw widths on a desk-sized model
  TrainConfig small = testutil::tiny_config();
  small.model.visual_dim = 47;
  small.model.acoustic_dim = 74;
  Model m = Model::init(small.model, 1);
  ModalityBatch batch = testutil::synthetic_batch(small, 1, 3);
  CHECK(batch.visual.dim(2) == 47);
  CHECK(batch.acoustic.dim(2) == 74);
  Tape tape(false);
  CHECK(m.forward(tape, batch).prediction.shape() == Shape{3});
}

TEST_CASE("pooling has no parameters") {
  TrainConfig c = testutil::tiny_config();
  Model m = Model::init(c.model, 0);
  const std::size_t d = c.model.width, dv = c.model.visual_dim, da = c.model.acoustic_dim;
  const std::size_t block = 12 * d * d + 9 * d;
  const std::size_t expect =
      c.model.vocab_size * d + c.model.max_seq_len * d + dv * d + da * d +
      c.model.num_layers * (4 * d + 2 + 2 * d * d + block) +
      (dv * 4 * d + 4 * d * d + 4 * d) + (da * 4 * d + 4 * d * d + 4 * d) +
      3 * (2 * d * d + 2 * d) + (3 * d + block + 3 * d * d + d + d + 1);
  CHECK(m.parameter_count() == expect);
  for (const auto& p : m.parameters()) CHECK(p.name.find("pool") == std::string::npos);
}

TEST_CASE("middle and final projections receive independent gradients") {
  TrainConfig c = testutil::tiny_config();
  Model m = Model::init(c.model, 4);
  ModalityBatch batch = testutil::synthetic_batch(c, 4, 4);
  ContrastiveConfig cc;
  {
    Tape tape;
    ForwardResult r = m.forward(tape, batch);
    tape.backward(mse_loss(tape, r.prediction, batch.labels));
    for (const ProjectionHead* h : {&m.text_head, &m.visual_head, &m.acoustic_head}) {
      CHECK(grad_norm(h->w1) > 0.0);
      CHECK(grad_norm(h->w2) == 0.0);
      CHECK(grad_norm(h->b2) == 0.0);
    }
  }
  for (const auto& p : m.parameters()) p.tensor.node()->grad.clear();
  {
    Tape tape;
    ForwardResult r = m.forward(tape, batch);
    tape.backward(pairwise_contrastive_loss(tape, r.text.final, r.visual.final,
                                            r.acoustic.final, batch.labels, cc));
    for (const ProjectionHead* h : {&m.text_head, &m.visual_head, &m.acoustic_head}) {
      CHECK(grad_norm(h->w1) > 0.0);
      CHECK(grad_norm(h->w2) > 0.0);
    }
    CHECK(grad_norm(m.fusion.w1) == 0.0);
    CHECK(grad_norm(m.fusion.w2) == 0.0);
  }
}
