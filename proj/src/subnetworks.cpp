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

#include "cmsclr/subnetworks.hpp"

#include <algorithm>

#include "cmsclr/error.hpp"

namespace cmsclr {

TokenEmbedder TokenEmbedder::init(std::size_t vocab, std::size_t max_seq_len,
                                  std::size_t width, Rng& rng) {
  TokenEmbedder e;
  e.table = init_matrix(vocab, width, rng);
  e.positions = init_matrix(max_seq_len, width, rng);
  return e;
}

void TokenEmbedder::collect(const std::string& prefix,
                            std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "table", table});
  out.push_back({prefix + "positions", positions});
}

Tensor embed_tokens(Tape& tape, const TokenEmbedder& embedder,
                    std::span<const int> tokens, std::size_t batch,
                    std::size_t seq_len) {
  if (tokens.size() != batch * seq_len) {
    throw ShapeError("embed_tokens: " + std::to_string(tokens.size()) +
                     " ids for a " + std::to_string(batch) + "x" +
                     std::to_string(seq_len) + " batch");
  }
  if (seq_len > embedder.max_seq_len()) {
    throw DataError("position id " + std::to_string(seq_len - 1) +
                    " exceeds max_seq_len " +
                    std::to_string(embedder.max_seq_len()));
  }
  const std::size_t d = embedder.table.dim(1);
  Tensor rows = ag::gather_rows(tape, embedder.table, tokens);
  Tensor x = ag::reshape(tape, rows, {batch, seq_len, d});
  return ag::add(tape, x, ag::slice(tape, embedder.positions, 0, 0, seq_len));
}

LstmParams LstmParams::init(std::size_t input_width, std::size_t hidden,
                            Rng& rng) {
  LstmParams p;
  p.input_weights = init_matrix(input_width, 4 * hidden, rng);
  p.recurrent_weights = init_matrix(hidden, 4 * hidden, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  std::fill_n(bias.begin() + hidden, hidden, 1.0);
  p.bias = Tensor::from({4 * hidden}, std::move(bias), true);
  return p;
}

void LstmParams::collect(const std::string& prefix,
                         std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "input_weights", input_weights});
  out.push_back({prefix + "recurrent_weights", recurrent_weights});
  out.push_back({prefix + "bias", bias});
}

Tensor lstm_forward(Tape& tape, const Tensor& seq, const Tensor& mask,
                    const LstmParams& params) {
  if (seq.rank() != 3 || seq.dim(2) != params.input_weights.dim(0)) {
    throw ShapeError("lstm_forward: sequence " + shape_str(seq.shape()) +
                     " does not match input weights " +
                     shape_str(params.input_weights.shape()));
  }
  const std::size_t b = seq.dim(0), steps = seq.dim(1), d = params.hidden();
  if (mask.shape() != Shape{b, steps}) {
    throw ShapeError("lstm_forward: mask " + shape_str(mask.shape()) +
                     " does not match sequence " + shape_str(seq.shape()));
  }
  Tensor projected = ag::linear(tape, seq, params.input_weights);
  Tensor h = Tensor::zeros({b, d});
  Tensor c = Tensor::zeros({b, d});
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  auto mv = mask.data();
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor xt = ag::reshape(tape, ag::slice(tape, projected, 1, t, 1), {b, 4 * d});
    Tensor gates = ag::add(
        tape, ag::add(tape, xt, ag::linear(tape, h, params.recurrent_weights)),
        params.bias);
    Tensor in_gate = ag::sigmoid(tape, ag::slice(tape, gates, 1, 0, d));
    Tensor forget = ag::sigmoid(tape, ag::slice(tape, gates, 1, d, d));
    Tensor cell_in = ag::tanh(tape, ag::slice(tape, gates, 1, 2 * d, d));
    Tensor out_gate = ag::sigmoid(tape, ag::slice(tape, gates, 1, 3 * d, d));
    Tensor c_new = ag::add(tape, ag::mul(tape, forget, c),
                           ag::mul(tape, in_gate, cell_in));
    Tensor h_new = ag::mul(tape, out_gate, ag::tanh(tape, c_new));

    bool all_valid = true;
    std::vector<double> keep(b * d), carry(b * d);
    for (std::size_t s = 0; s < b; ++s) {
      const double m = mv[s * steps + t];
      if (m != 0.0 && m != 1.0) throw DomainError("lstm mask must be 0 or 1");
      all_valid = all_valid && m == 1.0;
      std::fill_n(keep.begin() + s * d, d, m);
      std::fill_n(carry.begin() + s * d, d, 1.0 - m);
    }
    if (all_valid) {
      c = c_new;
      h = h_new;
    } else {
      Tensor keep_t = Tensor::from({b, d}, std::move(keep));
      Tensor carry_t = Tensor::from({b, d}, std::move(carry));
      c = ag::add(tape, ag::mul(tape, keep_t, c_new), ag::mul(tape, carry_t, c));
      h = ag::add(tape, ag::mul(tape, keep_t, h_new), ag::mul(tape, carry_t, h));
    }
    outputs.push_back(ag::reshape(tape, h, {b, 1, d}));
  }
  return ag::concat(tape, outputs, 1);
}

ProjectionHead ProjectionHead::init(std::size_t width, Rng& rng) {
  ProjectionHead p;
  p.w1 = init_matrix(width, width, rng);
  p.b1 = Tensor::zeros({width}, true);
  p.w2 = init_matrix(width, width, rng);
  p.b2 = Tensor::zeros({width}, true);
  return p;
}

void ProjectionHead::collect(const std::string& prefix,
                             std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "w1", w1});
  out.push_back({prefix + "b1", b1});
  out.push_back({prefix + "w2", w2});
  out.push_back({prefix + "b2", b2});
}

SubnetworkOutput subnetwork_forward(Tape& tape, const Tensor& hidden,
                                    const Tensor& mask,
                                    const ProjectionHead& head) {
  SubnetworkOutput out;
  out.pooled = ag::masked_mean(tape, hidden, mask);
  out.middle = ag::relu(tape, ag::affine(tape, out.pooled, head.w1, head.b1));
  out.final = ag::affine(tape, out.middle, head.w2, head.b2);
  return out;
}

Tensor project_nonverbal_features(Tape& tape, const Tensor& raw,
                                  const Tensor& projection) {
  if (raw.rank() != 3 || projection.rank() != 2 ||
      raw.dim(2) != projection.dim(0)) {
    throw ConfigError("nonverbal features " + shape_str(raw.shape()) +
                      " do not match projection " +
                      shape_str(projection.shape()));
  }
  return ag::linear(tape, raw, projection);
}

}  // namespace cmsclr
