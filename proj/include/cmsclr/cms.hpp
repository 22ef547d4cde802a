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

// Context-driven modality shifting (CMS) inside transformer self-attention.
//
// For word i and nonverbal frame j, a sigmoid gate decides how much of the
// projected visual and acoustic frame j moves word i:
//
//   g^v_ij = sigmoid(w_gv · [X_i; V_j] + b_v)
//   g^a_ij = sigmoid(w_ga · [X_i; A_j] + b_a)
//   a_ij   = g^v_ij (V_j W_v) + g^a_ij (A_j W_a)
//   a_i    = mean over valid j of a_ij
//
// and a_i is added to the query, key and value projections of word i before
// scaled dot-product attention. Every encoder layer owns its own CMS
// parameters and recomputes the gates from its current hidden states.
//
// Layout conventions: row vectors, so a "d→d" matrix is stored [d×d] and
// applied as x·W. Text tensors are [b×N×d], nonverbal tensors [b×M×d].

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cmsclr/autodiff.hpp"
#include "cmsclr/gradcheck.hpp"
#include "cmsclr/rng.hpp"

namespace cmsclr {

// Post-norm transformer block: attention, add & norm, FFN (d→4d→d, ReLU),
// add & norm. Projections carry no bias; the FFN does.
struct TransformerLayerParams {
  Tensor query, key, value, output;
  Tensor ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
  Tensor norm1_gain, norm1_bias, norm2_gain, norm2_bias;

  static TransformerLayerParams init(std::size_t width, Rng& rng);
  std::size_t width() const { return query.dim(0); }
  void collect(const std::string& prefix,
               std::vector<NamedTensor>& out) const;
};

struct CmsLayerParams {
  Tensor visual_gate;          // [2d×1], applied to [X_i; V_j]
  Tensor acoustic_gate;        // [2d×1], applied to [X_i; A_j]
  Tensor visual_gate_bias;     // scalar
  Tensor acoustic_gate_bias;   // scalar
  Tensor visual_shift;         // W_v [d×d]
  Tensor acoustic_shift;       // W_a [d×d]
  TransformerLayerParams block;

  static CmsLayerParams init(std::size_t width, Rng& rng);
  std::size_t width() const { return block.width(); }
  void collect(const std::string& prefix,
               std::vector<NamedTensor>& out) const;
};

struct CmsEncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t model_width = 32;
  std::size_t max_seq_len = 8;

  // Throws ConfigError when the width is not divisible by the head count.
  void validate() const;
};

enum class NonverbalKind { visual, acoustic };

// Nonverbal streams after projection to the model width, with {0,1} masks.
struct NonverbalStreams {
  Tensor visual;         // [b×Mv×d]
  Tensor acoustic;       // [b×Ma×d]
  Tensor visual_mask;    // [b×Mv]
  Tensor acoustic_mask;  // [b×Ma]
};

// Which layers apply the shift. Layers where it is inactive run plain
// attention (equivalently a = 0).
class CmsSchedule {
 public:
  static CmsSchedule all_layers() { return CmsSchedule(Kind::all, 0); }
  static CmsSchedule off() { return CmsSchedule(Kind::off, 0); }
  static CmsSchedule single(std::size_t layer) {
    return CmsSchedule(Kind::single, layer);
  }
  // "all", "off" or "single:<k>".
  static CmsSchedule parse(const std::string& text);
  std::string str() const;

  bool active(std::size_t layer) const {
    return kind_ == Kind::all || (kind_ == Kind::single && layer == layer_);
  }
  bool is_single() const { return kind_ == Kind::single; }
  std::size_t layer() const { return layer_; }
  // Throws ConfigError if a single-layer index is not below num_layers.
  void validate(std::size_t num_layers) const;

  bool operator==(const CmsSchedule&) const = default;

 private:
  enum class Kind { all, single, off };
  CmsSchedule(Kind kind, std::size_t layer) : kind_(kind), layer_(layer) {}
  Kind kind_;
  std::size_t layer_;
};

// CMS active only in layer k of an L-layer encoder.
CmsSchedule single_layer_cms_mode(std::size_t num_layers, std::size_t k);

// Gate matrix g[b,i,j] for text x[b×N×d] against stream y[b×M×d].
Tensor cms_gates(Tape& tape, const Tensor& x, const Tensor& y,
                 const Tensor& gate, const Tensor& gate_bias);
Tensor cms_gates(Tape& tape, const Tensor& x, const Tensor& y,
                 const CmsLayerParams& params, NonverbalKind which);

struct CmsShift {
  Tensor shift;           // a, [b×N×d]
  Tensor visual_gates;    // [b×N×Mv]
  Tensor acoustic_gates;  // [b×N×Ma]
  Tensor visual_values;   // V' W_v, [b×Mv×d]
  Tensor acoustic_values; // A' W_a, [b×Ma×d]
  std::vector<double> valid_counts;  // per sample, |valid in V ∪ valid in A|
};

// a_i averaged over the union of valid visual and acoustic positions. When
// the streams differ in length, position j contributes its visual term only
// if j is a valid visual frame, and likewise for acoustic.
CmsShift cms_shift(Tape& tape, const Tensor& x, const NonverbalStreams& streams,
                   const CmsLayerParams& params);

// Plain multi-head scaled dot-product self-attention including W_O.
Tensor self_attention(Tape& tape, const Tensor& x, const Tensor& text_mask,
                      const TransformerLayerParams& block, std::size_t heads);

// Same, with shift added at full width to XW_Q, XW_K and XW_V before the
// head split. Per-head scale is 1/sqrt(d/H).
Tensor cms_self_attention(Tape& tape, const Tensor& x, const Tensor& shift,
                          const Tensor& text_mask,
                          const TransformerLayerParams& block,
                          std::size_t heads);

// One post-norm block. An undefined shift means plain attention.
Tensor transformer_layer(Tape& tape, const Tensor& x, const Tensor& shift,
                         const Tensor& text_mask,
                         const TransformerLayerParams& block,
                         std::size_t heads);

// Replaces the gated shift of one layer with a caller-supplied a[b×N×d].
struct InjectedShift {
  std::size_t layer = 0;
  Tensor shift;
};

// Per-layer gate/value tensors captured during a forward pass. Entries for
// layers without an active shift stay empty.
struct CmsProbe {
  std::vector<std::optional<CmsShift>> layers;
};

// Stacks the CMS layers over layer-0 embeddings x. With an injected shift the
// schedule is ignored: only the injected layer is shifted.
Tensor cms_encoder_forward(Tape& tape, const Tensor& x,
                           const NonverbalStreams& streams,
                           const Tensor& text_mask,
                           const std::vector<CmsLayerParams>& layers,
                           std::size_t heads, const CmsSchedule& schedule,
                           const InjectedShift* injected = nullptr,
                           CmsProbe* probe = nullptr);

// Loop-based encoder that adds per-position shift[i] to the query, key and
// value projections of layer `shifted_layer` and runs plain attention
// elsewhere. Values only; shapes as in cms_encoder_forward.
std::vector<double> reference_shifted_encoder(
    const Tensor& x, const Tensor& shift, const Tensor& text_mask,
    const std::vector<CmsLayerParams>& layers, std::size_t heads,
    std::size_t shifted_layer);

// Checks the reduction of CMS to single-step shifting: a_ij := H'_i for every
// j is averaged through the masked mean (which must return H'_i), and the
// encoder with that shift in layer `layer` is compared against
// reference_shifted_encoder. Returns the max absolute deviation of both.
double mag_reduction_check(const std::vector<CmsLayerParams>& layers,
                           std::size_t layer, const Tensor& x,
                           const Tensor& shifted, const Tensor& text_mask,
                           std::size_t heads, std::size_t frames = 3);

// Random instance for the reduction check, as used by the CLI.
double mag_reduction_check(std::uint64_t seed);

}  // namespace cmsclr
