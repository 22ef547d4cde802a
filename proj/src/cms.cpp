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

#include "cmsclr/cms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cmsclr/error.hpp"

namespace cmsclr {

namespace {

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

void check_heads(std::size_t width, std::size_t heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("head count " + std::to_string(heads) +
                      " does not divide model width " + std::to_string(width));
  }
}

void check_text(const Tensor& x, const Tensor& text_mask) {
  if (x.rank() != 3) {
    throw ShapeError("text hidden states must be [b×N×d], got " +
                     shape_str(x.shape()));
  }
  if (text_mask.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw ShapeError("text mask " + shape_str(text_mask.shape()) +
                     " does not match hidden states " + shape_str(x.shape()));
  }
}

// Broadcasts mask[b×M] over the word axis to [b×N×M].
Tensor expand_frame_mask(const Tensor& mask, std::size_t words) {
  const std::size_t b = mask.dim(0), m = mask.dim(1);
  std::vector<double> v(b * words * m);
  auto mv = mask.data();
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < words; ++i)
      for (std::size_t j = 0; j < m; ++j) v[(s * words + i) * m + j] = mv[s * m + j];
  return Tensor::from({b, words, m}, std::move(v));
}

Tensor attend(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
              const Tensor& text_mask, const TransformerLayerParams& block,
              std::size_t heads) {
  const std::size_t width = q.dim(2);
  check_heads(width, heads);
  const double scale =
      1.0 / std::sqrt(static_cast<double>(width / heads));
  Tensor qh = ag::split_heads(tape, q, heads);
  Tensor kh = ag::split_heads(tape, k, heads);
  Tensor vh = ag::split_heads(tape, v, heads);
  Tensor scores = ag::scale(tape, ag::bmm(tape, qh, kh, true), scale);
  Tensor probs = ag::masked_softmax(tape, scores, text_mask);
  Tensor context = ag::merge_heads(tape, ag::bmm(tape, probs, vh), heads);
  return ag::linear(tape, context, block.output);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

TransformerLayerParams TransformerLayerParams::init(std::size_t width,
                                                    Rng& rng) {
  TransformerLayerParams p;
  p.query = init_matrix(width, width, rng);
  p.key = init_matrix(width, width, rng);
  p.value = init_matrix(width, width, rng);
  p.output = init_matrix(width, width, rng);
  p.ffn_in = init_matrix(width, 4 * width, rng);
  p.ffn_in_bias = zeros_param({4 * width});
  p.ffn_out = init_matrix(4 * width, width, rng);
  p.ffn_out_bias = zeros_param({width});
  p.norm1_gain = ones_param({width});
  p.norm1_bias = zeros_param({width});
  p.norm2_gain = ones_param({width});
  p.norm2_bias = zeros_param({width});
  return p;
}

void TransformerLayerParams::collect(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "query", query});
  out.push_back({prefix + "key", key});
  out.push_back({prefix + "value", value});
  out.push_back({prefix + "output", output});
  out.push_back({prefix + "ffn_in", ffn_in});
  out.push_back({prefix + "ffn_in_bias", ffn_in_bias});
  out.push_back({prefix + "ffn_out", ffn_out});
  out.push_back({prefix + "ffn_out_bias", ffn_out_bias});
  out.push_back({prefix + "norm1_gain", norm1_gain});
  out.push_back({prefix + "norm1_bias", norm1_bias});
  out.push_back({prefix + "norm2_gain", norm2_gain});
  out.push_back({prefix + "norm2_bias", norm2_bias});
}

CmsLayerParams CmsLayerParams::init(std::size_t width, Rng& rng) {
  CmsLayerParams p;
  p.visual_gate = init_matrix(2 * width, 1, rng);
  p.acoustic_gate = init_matrix(2 * width, 1, rng);
  p.visual_gate_bias = Tensor::scalar(0.0, true);
  p.acoustic_gate_bias = Tensor::scalar(0.0, true);
  p.visual_shift = init_matrix(width, width, rng);
  p.acoustic_shift = init_matrix(width, width, rng);
  p.block = TransformerLayerParams::init(width, rng);
  return p;
}

void CmsLayerParams::collect(const std::string& prefix,
                             std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "visual_gate", visual_gate});
  out.push_back({prefix + "acoustic_gate", acoustic_gate});
  out.push_back({prefix + "visual_gate_bias", visual_gate_bias});
  out.push_back({prefix + "acoustic_gate_bias", acoustic_gate_bias});
  out.push_back({prefix + "visual_shift", visual_shift});
  out.push_back({prefix + "acoustic_shift", acoustic_shift});
  block.collect(prefix, out);
}

void CmsEncoderConfig::validate() const {
  if (model_width == 0 || num_heads == 0 || max_seq_len == 0) {
    throw ConfigError("encoder width, heads and max_seq_len must be positive");
  }
  check_heads(model_width, num_heads);
}

// ---------------------------------------------------------------------------
// Schedule

CmsSchedule CmsSchedule::parse(const std::string& text) {
  if (text == "all" || text == "all-layers") return all_layers();
  if (text == "off") return off();
  const std::string prefix = "single:";
  if (text.rfind(prefix, 0) == 0 && text.size() > prefix.size()) {
    const std::string digits = text.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      return single(std::stoul(digits));
    }
  }
  throw ConfigError("cms mode must be 'all', 'off' or 'single:<k>', got '" +
                    text + "'");
}

std::string CmsSchedule::str() const {
  switch (kind_) {
    case Kind::all:
      return "all";
    case Kind::off:
      return "off";
    case Kind::single:
      return "single:" + std::to_string(layer_);
  }
  return "off";
}

void CmsSchedule::validate(std::size_t num_layers) const {
  if (kind_ == Kind::single && layer_ >= num_layers) {
    throw ConfigError("single-layer CMS index " + std::to_string(layer_) +
                      " out of range for " + std::to_string(num_layers) +
                      " layers");
  }
}

CmsSchedule single_layer_cms_mode(std::size_t num_layers, std::size_t k) {
  CmsSchedule s = CmsSchedule::single(k);
  s.validate(num_layers);
  return s;
}

// ---------------------------------------------------------------------------
// Gates and shift

Tensor cms_gates(Tape& tape, const Tensor& x, const Tensor& y,
                 const Tensor& gate, const Tensor& gate_bias) {
  if (x.rank() != 3 || y.rank() != 3 || x.dim(0) != y.dim(0)) {
    throw ShapeError("cms_gates: text " + shape_str(x.shape()) +
                     " and stream " + shape_str(y.shape()) +
                     " must be [b×N×d] and [b×M×d]");
  }
  const std::size_t d = x.dim(2);
  if (y.dim(2) != d || gate.shape() != Shape{2 * d, 1}) {
    throw ShapeError("cms_gates: width mismatch, text " +
                     shape_str(x.shape()) + ", stream " +
                     shape_str(y.shape()) + ", gate " +
                     shape_str(gate.shape()));
  }
  const std::size_t b = x.dim(0), n = x.dim(1), m = y.dim(1);
  Tensor text_part = ag::slice(tape, gate, 0, 0, d);
  Tensor frame_part = ag::slice(tape, gate, 0, d, d);
  Tensor sx = ag::reshape(tape, ag::linear(tape, x, text_part), {b, n});
  Tensor sy = ag::reshape(tape, ag::linear(tape, y, frame_part), {b, m});
  return ag::sigmoid(tape, ag::add(tape, ag::outer_add(tape, sx, sy), gate_bias));
}

Tensor cms_gates(Tape& tape, const Tensor& x, const Tensor& y,
                 const CmsLayerParams& params, NonverbalKind which) {
  if (which == NonverbalKind::visual) {
    return cms_gates(tape, x, y, params.visual_gate, params.visual_gate_bias);
  }
  return cms_gates(tape, x, y, params.acoustic_gate, params.acoustic_gate_bias);
}

CmsShift cms_shift(Tape& tape, const Tensor& x, const NonverbalStreams& streams,
                   const CmsLayerParams& params) {
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  const auto check_stream = [&](const Tensor& s, const Tensor& mask,
                                const char* name) {
    if (s.rank() != 3 || s.dim(0) != b || s.dim(2) != d ||
        mask.shape() != Shape{b, s.dim(1)}) {
      throw ShapeError(std::string("cms_shift: ") + name + " stream " +
                       shape_str(s.shape()) + " / mask " +
                       shape_str(mask.shape()) + " incompatible with text " +
                       shape_str(x.shape()));
    }
  };
  check_stream(streams.visual, streams.visual_mask, "visual");
  check_stream(streams.acoustic, streams.acoustic_mask, "acoustic");

  const std::size_t mv = streams.visual.dim(1), ma = streams.acoustic.dim(1);
  const std::size_t union_len = std::max(mv, ma);
  auto vmask = streams.visual_mask.data();
  auto amask = streams.acoustic_mask.data();
  std::vector<double> counts(b, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    double nv = 0.0, na = 0.0;
    for (std::size_t j = 0; j < mv; ++j) nv += vmask[s * mv + j];
    for (std::size_t j = 0; j < ma; ++j) na += amask[s * ma + j];
    if (nv == 0.0 || na == 0.0) {
      throw DegenerateInputError("cms_shift: sample " + std::to_string(s) +
                                 " has an all-masked " +
                                 (nv == 0.0 ? "visual" : "acoustic") +
                                 " stream");
    }
    for (std::size_t j = 0; j < union_len; ++j) {
      const bool v_ok = j < mv && vmask[s * mv + j] != 0.0;
      const bool a_ok = j < ma && amask[s * ma + j] != 0.0;
      if (v_ok || a_ok) counts[s] += 1.0;
    }
  }

  CmsShift out;
  out.valid_counts = counts;
  out.visual_gates = cms_gates(tape, x, streams.visual, params, NonverbalKind::visual);
  out.acoustic_gates = cms_gates(tape, x, streams.acoustic, params, NonverbalKind::acoustic);
  out.visual_values = ag::linear(tape, streams.visual, params.visual_shift);
  out.acoustic_values = ag::linear(tape, streams.acoustic, params.acoustic_shift);

  Tensor visual_sum = ag::bmm(
      tape,
      ag::mul(tape, out.visual_gates, expand_frame_mask(streams.visual_mask, n)),
      out.visual_values);
  Tensor acoustic_sum = ag::bmm(
      tape,
      ag::mul(tape, out.acoustic_gates,
              expand_frame_mask(streams.acoustic_mask, n)),
      out.acoustic_values);

  std::vector<double> denom(b * n * d);
  for (std::size_t s = 0; s < b; ++s) {
    std::fill_n(denom.begin() + s * n * d, n * d, counts[s]);
  }
  out.shift = ag::div(tape, ag::add(tape, visual_sum, acoustic_sum),
                      Tensor::from({b, n, d}, std::move(denom)));
  return out;
}

// ---------------------------------------------------------------------------
// Attention and layers

Tensor self_attention(Tape& tape, const Tensor& x, const Tensor& text_mask,
                      const TransformerLayerParams& block, std::size_t heads) {
  check_text(x, text_mask);
  return attend(tape, ag::linear(tape, x, block.query),
                ag::linear(tape, x, block.key),
                ag::linear(tape, x, block.value), text_mask, block, heads);
}

Tensor cms_self_attention(Tape& tape, const Tensor& x, const Tensor& shift,
                          const Tensor& text_mask,
                          const TransformerLayerParams& block,
                          std::size_t heads) {
  check_text(x, text_mask);
  if (shift.shape() != x.shape()) {
    throw ShapeError("cms_self_attention: shift " + shape_str(shift.shape()) +
                     " does not match hidden states " + shape_str(x.shape()));
  }
  return attend(tape, ag::add(tape, ag::linear(tape, x, block.query), shift),
                ag::add(tape, ag::linear(tape, x, block.key), shift),
                ag::add(tape, ag::linear(tape, x, block.value), shift),
                text_mask, block, heads);
}

Tensor transformer_layer(Tape& tape, const Tensor& x, const Tensor& shift,
                         const Tensor& text_mask,
                         const TransformerLayerParams& block,
                         std::size_t heads) {
  Tensor attn = shift.defined()
                    ? cms_self_attention(tape, x, shift, text_mask, block, heads)
                    : self_attention(tape, x, text_mask, block, heads);
  Tensor h = ag::layer_norm(tape, ag::add(tape, x, attn), block.norm1_gain,
                            block.norm1_bias);
  Tensor ff = ag::affine(
      tape, ag::relu(tape, ag::affine(tape, h, block.ffn_in, block.ffn_in_bias)),
      block.ffn_out, block.ffn_out_bias);
  return ag::layer_norm(tape, ag::add(tape, h, ff), block.norm2_gain,
                        block.norm2_bias);
}

Tensor cms_encoder_forward(Tape& tape, const Tensor& x,
                           const NonverbalStreams& streams,
                           const Tensor& text_mask,
                           const std::vector<CmsLayerParams>& layers,
                           std::size_t heads, const CmsSchedule& schedule,
                           const InjectedShift* injected, CmsProbe* probe) {
  check_text(x, text_mask);
  schedule.validate(layers.size());
  if (injected && injected->layer >= layers.size()) {
    throw ConfigError("injected shift layer " +
                      std::to_string(injected->layer) + " out of range");
  }
  if (probe) probe->layers.assign(layers.size(), std::nullopt);
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Tensor shift;
    if (injected) {
      if (l == injected->layer) shift = injected->shift;
    } else if (schedule.active(l)) {
      CmsShift s = cms_shift(tape, h, streams, layers[l]);
      shift = s.shift;
      if (probe) probe->layers[l] = std::move(s);
    }
    h = transformer_layer(tape, h, shift, text_mask, layers[l].block, heads);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Reference implementation and the MAG reduction

namespace {

using Matrix = std::vector<double>;  // row-major, dims carried separately

// out[n×c] = in[n×r]·w[r×c]
Matrix matmul_rows(const Matrix& in, std::size_t n, std::size_t r,
                   std::span<const double> w, std::size_t c) {
  Matrix out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      double acc = 0.0;
      for (std::size_t p = 0; p < r; ++p) acc += in[i * r + p] * w[p * c + k];
      out[i * c + k] = acc;
    }
  return out;
}

void layer_norm_rows(Matrix& m, std::size_t n, std::size_t d,
                     std::span<const double> gain, std::span<const double> bias) {
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += m[i * d + j];
    mu /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) var += (m[i * d + j] - mu) * (m[i * d + j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + ag::kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      m[i * d + j] = (m[i * d + j] - mu) * inv * gain[j] + bias[j];
    }
  }
}

}  // namespace

std::vector<double> reference_shifted_encoder(
    const Tensor& x, const Tensor& shift, const Tensor& text_mask,
    const std::vector<CmsLayerParams>& layers, std::size_t heads,
    std::size_t shifted_layer) {
  check_text(x, text_mask);
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  check_heads(d, heads);
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> result(b * n * d);
  for (std::size_t s = 0; s < b; ++s) {
    Matrix h(x.data().begin() + s * n * d, x.data().begin() + (s + 1) * n * d);
    const double* mask = text_mask.data().data() + s * n;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const TransformerLayerParams& blk = layers[l].block;
      Matrix q = matmul_rows(h, n, d, blk.query.data(), d);
      Matrix k = matmul_rows(h, n, d, blk.key.data(), d);
      Matrix v = matmul_rows(h, n, d, blk.value.data(), d);
      if (l == shifted_layer) {
        const double* sh = shift.data().data() + s * n * d;
        for (std::size_t i = 0; i < n * d; ++i) {
          q[i] += sh[i];
          k[i] += sh[i];
          v[i] += sh[i];
        }
      }
      Matrix context(n * d, 0.0);
      for (std::size_t hd = 0; hd < heads; ++hd) {
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> e(n, -std::numeric_limits<double>::infinity());
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < n; ++j) {
            if (mask[j] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t c = 0; c < dh; ++c) {
              dot += q[i * d + hd * dh + c] * k[j * d + hd * dh + c];
            }
            e[j] = dot * scale;
            mx = std::max(mx, e[j]);
          }
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            e[j] = mask[j] == 0.0 ? 0.0 : std::exp(e[j] - mx);
            total += e[j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double alpha = e[j] / total;
            for (std::size_t c = 0; c < dh; ++c) {
              context[i * d + hd * dh + c] += alpha * v[j * d + hd * dh + c];
            }
          }
        }
      }
      Matrix attn = matmul_rows(context, n, d, blk.output.data(), d);
      for (std::size_t i = 0; i < n * d; ++i) h[i] += attn[i];
      layer_norm_rows(h, n, d, blk.norm1_gain.data(), blk.norm1_bias.data());
      Matrix hidden = matmul_rows(h, n, d, blk.ffn_in.data(), 4 * d);
      for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i] = std::max(0.0, hidden[i] + blk.ffn_in_bias[i % (4 * d)]);
      }
      Matrix ff = matmul_rows(hidden, n, 4 * d, blk.ffn_out.data(), d);
      for (std::size_t i = 0; i < n * d; ++i) {
        h[i] += ff[i] + blk.ffn_out_bias[i % d];
      }
      layer_norm_rows(h, n, d, blk.norm2_gain.data(), blk.norm2_bias.data());
    }
    std::copy(h.begin(), h.end(), result.begin() + s * n * d);
  }
  return result;
}

double mag_reduction_check(const std::vector<CmsLayerParams>& layers,
                           std::size_t layer, const Tensor& x,
                           const Tensor& shifted, const Tensor& text_mask,
                           std::size_t heads, std::size_t frames) {
  check_text(x, text_mask);
  if (shifted.shape() != x.shape()) {
    throw ShapeError("mag_reduction_check: H' " + shape_str(shifted.shape()) +
                     " must match X " + shape_str(x.shape()));
  }
  if (frames == 0) throw ShapeError("mag_reduction_check: frames must be > 0");
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);

  // a_ij = H'_i for every frame j, then the frame average.
  std::vector<double> pairs(b * n * frames * d);
  auto hv = shifted.data();
  for (std::size_t row = 0; row < b * n; ++row)
    for (std::size_t j = 0; j < frames; ++j)
      std::copy_n(hv.data() + row * d, d, pairs.begin() + (row * frames + j) * d);
  Tape tape(/*recording=*/false);
  Tensor averaged = ag::reshape(
      tape,
      ag::masked_mean(tape, Tensor::from({b * n, frames, d}, std::move(pairs)),
                      Tensor::full({b * n, frames}, 1.0)),
      {b, n, d});
  double deviation = 0.0;
  for (std::size_t i = 0; i < averaged.numel(); ++i) {
    deviation = std::max(deviation, std::abs(averaged[i] - hv[i]));
  }

  // Streams are unused when a shift is injected.
  NonverbalStreams unused;
  const InjectedShift injected{layer, averaged};
  Tensor encoded = cms_encoder_forward(tape, x, unused, text_mask, layers, heads,
                                       CmsSchedule::off(), &injected);
  const std::vector<double> reference =
      reference_shifted_encoder(x, shifted, text_mask, layers, heads, layer);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    deviation = std::max(deviation, std::abs(encoded[i] - reference[i]));
  }
  return deviation;
}

double mag_reduction_check(std::uint64_t seed) {
  constexpr std::size_t kBatch = 2, kWords = 4, kWidth = 8, kHeads = 2,
                        kLayers = 2;
  Rng rng(seed);
  std::vector<CmsLayerParams> layers;
  for (std::size_t l = 0; l < kLayers; ++l) {
    layers.push_back(CmsLayerParams::init(kWidth, rng));
  }
  Tensor x = random_tensor({kBatch, kWords, kWidth}, rng);
  Tensor shifted = random_tensor({kBatch, kWords, kWidth}, rng);
  std::vector<double> mask(kBatch * kWords, 1.0);
  mask[kBatch * kWords - 1] = 0.0;  // one padded word in the second sample
  const std::size_t layer = rng.index(kLayers);
  return mag_reduction_check(layers, layer, x, shifted,
                             Tensor::from({kBatch, kWords}, std::move(mask)),
                             kHeads);
}

}  // namespace cmsclr
