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

// Loop-level reference implementations used by the tests. Nothing here calls
// into the library's forward code; inputs are plain row-major vectors.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

// y[r×n] = x[r×k] · w[k×n]
inline Vec matmul(const Vec& x, const Vec& w, std::size_t r, std::size_t k,
                  std::size_t n) {
  Vec y(r * n, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += x[i * k + c] * w[c * n + j];
      y[i * n + j] = s;
    }
  return y;
}

// g[s][i][j] = σ(w·[x_si; y_sj] + bias), w of length 2d.
inline Vec cms_gates(const Vec& x, const Vec& y, const Vec& w, double bias,
                     std::size_t b, std::size_t n, std::size_t m,
                     std::size_t d) {
  Vec g(b * n * m);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double tx = 0.0, ty = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          tx += w[k] * x[(s * n + i) * d + k];
          ty += w[d + k] * y[(s * m + j) * d + k];
        }
        g[(s * n + i) * m + j] = sigmoid(tx + ty + bias);
      }
  return g;
}

struct CmsLayer {
  Vec gate_v, gate_a;  // 2d each
  double bias_v = 0.0, bias_a = 0.0;
  Vec shift_v, shift_a;  // d×d
  Vec wq, wk, wv, wo;    // d×d
};

// a_i = Σ_j [g^v_ij (W_v V_j) m^v_j + g^a_ij (W_a A_j) m^a_j] / |valid in V ∪ A|
inline Vec cms_shift(const Vec& x, const Vec& v, const Vec& a, const Vec& vmask,
                     const Vec& amask, const CmsLayer& p, std::size_t b,
                     std::size_t n, std::size_t mv, std::size_t ma,
                     std::size_t d) {
  const Vec gv = cms_gates(x, v, p.gate_v, p.bias_v, b, n, mv, d);
  const Vec ga = cms_gates(x, a, p.gate_a, p.bias_a, b, n, ma, d);
  const Vec pv = matmul(v, p.shift_v, b * mv, d, d);
  const Vec pa = matmul(a, p.shift_a, b * ma, d, d);
  Vec out(b * n * d, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    double count = 0.0;
    for (std::size_t j = 0; j < std::max(mv, ma); ++j) {
      const bool vo = j < mv && vmask[s * mv + j] == 1.0;
      const bool ao = j < ma && amask[s * ma + j] == 1.0;
      count += (vo || ao) ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < std::max(mv, ma); ++j) {
          double aij = 0.0;
          if (j < mv && vmask[s * mv + j] == 1.0)
            aij += gv[(s * n + i) * mv + j] * pv[(s * mv + j) * d + k];
          if (j < ma && amask[s * ma + j] == 1.0)
            aij += ga[(s * n + i) * ma + j] * pa[(s * ma + j) * d + k];
          sum += aij;
        }
        out[(s * n + i) * d + k] = sum / count;
      }
  }
  return out;
}

// Multi-head attention with the shift added to q, k and v at full width.
// shift may be empty (plain attention). Masked keys get zero weight.
inline Vec attention(const Vec& x, const Vec& shift, const Vec& mask,
                     const CmsLayer& p, std::size_t b, std::size_t n,
                     std::size_t d, std::size_t heads) {
  Vec q = matmul(x, p.wq, b * n, d, d);
  Vec k = matmul(x, p.wk, b * n, d, d);
  Vec v = matmul(x, p.wv, b * n, d, d);
  if (!shift.empty()) {
    for (std::size_t t = 0; t < q.size(); ++t) {
      q[t] += shift[t];
      k[t] += shift[t];
      v[t] += shift[t];
    }
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Vec ctx(b * n * d, 0.0);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        Vec e(n, -INFINITY);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          if (mask[s * n + j] != 1.0) continue;
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c)
            dot += q[(s * n + i) * d + h * dh + c] * k[(s * n + j) * d + h * dh + c];
          e[j] = dot * scale;
          mx = std::max(mx, e[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          if (mask[s * n + j] == 1.0) z += std::exp(e[j] - mx);
        for (std::size_t j = 0; j < n; ++j) {
          if (mask[s * n + j] != 1.0) continue;
          const double alpha = std::exp(e[j] - mx) / z;
          for (std::size_t c = 0; c < dh; ++c)
            ctx[(s * n + i) * d + h * dh + c] += alpha * v[(s * n + j) * d + h * dh + c];
        }
      }
  return matmul(ctx, p.wo, b * n, d, d);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// -1/n Σ_i Σ_k t_ik log softmax_k(cos(za_i, zb_k)/τ)
inline double soft_directional(const Vec& za, const Vec& zb, const Vec& targets,
                               std::size_t n, std::size_t d, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vec logit(n);
    for (std::size_t k = 0; k < n; ++k) {
      logit[k] = cosine({za.data() + i * d, d}, {zb.data() + k * d, d}) / tau;
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) denom += std::exp(logit[k]);
    for (std::size_t k = 0; k < n; ++k) {
      if (targets[i * n + k] != 0.0)
        total -= targets[i * n + k] * std::log(std::exp(logit[k]) / denom);
    }
  }
  return total / static_cast<double>(n);
}

// Literal InfoNCE: -1/n Σ_i log(exp(<a_i,b_i>/τ) / Σ_k exp(<a_i,b_k>/τ)).
inline double info_nce(const Vec& za, const Vec& zb, std::size_t n,
                       std::size_t d, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = std::exp(cosine({za.data() + i * d, d}, {zb.data() + i * d, d}) / tau);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      denom += std::exp(cosine({za.data() + i * d, d}, {zb.data() + k * d, d}) / tau);
    total += -std::log(pos / denom);
  }
  return total / static_cast<double>(n);
}

inline Vec smoothed_targets(const Vec& y, double beta, double delta) {
  const std::size_t n = y.size();
  auto sgn = [](double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); };
  Vec t(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && sgn(y[i]) == sgn(y[j]) && std::abs(y[i] - y[j]) <= delta) ++count;
    if (count == 0) {
      t[i * n + i] = 1.0;
      continue;
    }
    t[i * n + i] = beta;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && sgn(y[i]) == sgn(y[j]) && std::abs(y[i] - y[j]) <= delta)
        t[i * n + j] = (1.0 - beta) / static_cast<double>(count);
  }
  return t;
}

inline double pairwise_contrastive(const Vec& zl, const Vec& zv, const Vec& za,
                                   const Vec& targets, std::size_t n,
                                   std::size_t d, double tau) {
  const Vec* mods[3] = {&zl, &zv, &za};
  double total = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) total += soft_directional(*mods[a], *mods[b], targets, n, d, tau);
  return total;
}

struct Metrics {
  double mae, pearson, acc2_nonneg, acc2_posneg, f1_nonneg, f1_posneg;
};

// Per-class precision/recall, F1 = 2PR/(P+R), weighted by true support.
inline double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.empty()) return 0.0;
  double total = 0.0;
  for (int c = 0; c < 2; ++c) {
    double tp = 0, pred_c = 0, true_c = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c) pred_c += 1;
      if (truth[i] == c) true_c += 1;
      if (pred[i] == c && truth[i] == c) tp += 1;
    }
    const double precision = pred_c > 0 ? tp / pred_c : 0.0;
    const double recall = true_c > 0 ? tp / true_c : 0.0;
    const double f1 = (precision + recall) > 0
                          ? 2 * precision * recall / (precision + recall)
                          : 0.0;
    total += f1 * true_c;
  }
  return total / static_cast<double>(truth.size());
}

inline Metrics metrics(const Vec& p, const Vec& y) {
  const double n = static_cast<double>(y.size());
  Metrics m{};
  double mp = 0, my = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m.mae += std::abs(p[i] - y[i]) / n;
    mp += p[i] / n;
    my += y[i] / n;
  }
  double cov = 0, vp = 0, vy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    cov += (p[i] - mp) * (y[i] - my);
    vp += (p[i] - mp) * (p[i] - mp);
    vy += (y[i] - my) * (y[i] - my);
  }
  m.pearson = (vp > 0 && vy > 0) ? cov / std::sqrt(vp) / std::sqrt(vy) : 0.0;
  std::vector<int> t1, p1, t2, p2;
  for (std::size_t i = 0; i < y.size(); ++i) {
    t1.push_back(y[i] >= 0);
    p1.push_back(p[i] >= 0);
    if (y[i] != 0) {
      t2.push_back(y[i] > 0);
      p2.push_back(p[i] > 0);
    }
  }
  auto acc = [](const std::vector<int>& t, const std::vector<int>& q) {
    if (t.empty()) return 0.0;
    double c = 0;
    for (std::size_t i = 0; i < t.size(); ++i) c += t[i] == q[i];
    return c / static_cast<double>(t.size());
  };
  m.acc2_nonneg = acc(t1, p1);
  m.acc2_posneg = acc(t2, p2);
  m.f1_nonneg = weighted_f1(t1, p1);
  m.f1_posneg = weighted_f1(t2, p2);
  return m;
}

// One LSTM step for a scalar unit, gate order i, f, g, o.
struct ScalarLstm {
  double wi, wf, wg, wo;  // input weights
  double ui, uf, ug, uo;  // recurrent weights
  double bi, bf, bg, bo;
};

inline void lstm_step(const ScalarLstm& p, double x, double& h, double& c) {
  const double i = sigmoid(p.wi * x + p.ui * h + p.bi);
  const double f = sigmoid(p.wf * x + p.uf * h + p.bf);
  const double g = std::tanh(p.wg * x + p.ug * h + p.bg);
  const double o = sigmoid(p.wo * x + p.uo * h + p.bo);
  c = f * c + i * g;
  h = o * std::tanh(c);
}

}  // namespace oracle
