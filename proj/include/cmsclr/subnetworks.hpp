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

// Per-modality encoder -> mean pooler -> projection head stacks.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "cmsclr/autodiff.hpp"
#include "cmsclr/gradcheck.hpp"
#include "cmsclr/rng.hpp"

namespace cmsclr {

// Trainable stand-in for pretrained word features.
struct TokenEmbedder {
  Tensor table;      // [vocab×d]
  Tensor positions;  // [max_seq_len×d]

  static TokenEmbedder init(std::size_t vocab, std::size_t max_seq_len,
                            std::size_t width, Rng& rng);
  std::size_t vocab_size() const { return table.dim(0); }
  std::size_t max_seq_len() const { return positions.dim(0); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// tokens is row-major [batch×seq_len]; returns table[token] + pos[i].
Tensor embed_tokens(Tape& tape, const TokenEmbedder& embedder,
                    std::span<const int> tokens, std::size_t batch,
                    std::size_t seq_len);

// Unidirectional single-layer LSTM, gate blocks ordered (i, f, g, o) along
// the 4d axis.
struct LstmParams {
  Tensor input_weights;      // [d_in×4d]
  Tensor recurrent_weights;  // [d×4d]
  Tensor bias;               // [4d], forget block starts at 1

  static LstmParams init(std::size_t input_width, std::size_t hidden,
                         Rng& rng);
  std::size_t hidden() const { return recurrent_weights.dim(0); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// seq [b×M×d_in], mask [b×M] -> hidden states [b×M×d]. Masked steps carry
// the previous hidden and cell state forward unchanged.
Tensor lstm_forward(Tape& tape, const Tensor& seq, const Tensor& mask,
                    const LstmParams& params);

// Two-layer head: z1 = ReLU(u·W1 + b1), z = z1·W2 + b2.
struct ProjectionHead {
  Tensor w1, b1, w2, b2;

  static ProjectionHead init(std::size_t width, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct SubnetworkOutput {
  Tensor pooled;  // u_m [b×d]
  Tensor middle;  // z1_m [b×d], feeds fusion
  Tensor final;   // z_m [b×d], feeds contrastive learning
};

// Parameter-free masked mean pooling followed by the projection head.
SubnetworkOutput subnetwork_forward(Tape& tape, const Tensor& hidden,
                                    const Tensor& mask,
                                    const ProjectionHead& head);

// raw [b×M×d_raw] · projection [d_raw×d]. A width mismatch is a ConfigError.
Tensor project_nonverbal_features(Tape& tape, const Tensor& raw,
                                  const Tensor& projection);

}  // namespace cmsclr
