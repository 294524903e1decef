#pragma once

// Training objectives: symmetric InfoNCE over in-batch negatives, the
// parameter-free similarity map and soft-argmax used for position
// regression, the three-level position loss, and their weighted total.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cvgeo/common.hpp"
#include "cvgeo/ops.hpp"
#include "cvgeo/tensor.hpp"

namespace cvgeo {

/// Query location on the level-1 reference feature map, continuous pixel
/// coordinates (x = column, y = row).
struct PositionPrior {
  double x = 0.0;
  double y = 0.0;

  /// Prior on a map pooled by `factor`.
  Point2 at_factor(int factor) const { return {x / factor, y / factor}; }
};

struct LossWeights {
  double lambda_bev_street = 0.1;  // λ1
  double lambda_bev_aerial = 0.1;  // λ2
  double lambda_pcm = 0.05;        // λ3
  double tau = 0.05;
  bool learnable_tau = false;

  static LossWeights baseline() { return {0.0, 0.0, 0.0, 0.05, false}; }
};

/// Symmetric InfoNCE: mean of the row-wise and column-wise cross-entropy of
/// S/τ with S = Fq·Frᵀ and the diagonal as positives. `tau` is a one-element
/// tensor so it can be learned.
template <typename T>
BasicTensor<T> info_nce_symmetric(const BasicTensor<T>& fq, const BasicTensor<T>& fr, const BasicTensor<T>& tau,
                                  Tape<T>* tape = nullptr) {
  if (fq.dim() != 2 || fr.dim() != 2 || fq.shape() != fr.shape()) {
    throw ShapeError("info_nce_symmetric: expected two [B,C] inputs, got " + shape_str(fq.shape()) + " and " +
                     shape_str(fr.shape()));
  }
  const std::size_t b = fq.extent(0), c = fq.extent(1);
  if (b == 0) throw ArgumentError("info_nce_symmetric: empty batch");
  const Accum t = tau.item();
  if (!(t > 0)) throw ArgumentError("info_nce_symmetric: tau must be > 0");

  std::vector<Accum> g(b * b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      Accum acc = 0;
      for (std::size_t k = 0; k < c; ++k) acc += Accum(fq[i * c + k]) * fr[j * c + k];
      g[i * b + j] = acc;
    }

  // Row and column softmax of Z = G/τ.
  std::vector<Accum> p_row(b * b), p_col(b * b);
  Accum loss = 0;
  for (std::size_t i = 0; i < b; ++i) {
    Accum mx = -std::numeric_limits<Accum>::infinity();
    for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, g[i * b + j] / t);
    Accum z = 0;
    for (std::size_t j = 0; j < b; ++j) z += p_row[i * b + j] = std::exp(g[i * b + j] / t - mx);
    for (std::size_t j = 0; j < b; ++j) p_row[i * b + j] /= z;
    loss += (mx + std::log(z)) - g[i * b + i] / t;
  }
  for (std::size_t j = 0; j < b; ++j) {
    Accum mx = -std::numeric_limits<Accum>::infinity();
    for (std::size_t i = 0; i < b; ++i) mx = std::max(mx, g[i * b + j] / t);
    Accum z = 0;
    for (std::size_t i = 0; i < b; ++i) z += p_col[i * b + j] = std::exp(g[i * b + j] / t - mx);
    for (std::size_t i = 0; i < b; ++i) p_col[i * b + j] /= z;
    loss += (mx + std::log(z)) - g[j * b + j] / t;
  }
  loss /= 2.0 * static_cast<Accum>(b);

  const bool track = tracks(tape, {&fq, &fr, &tau});
  BasicTensor<T> out({1});
  out[0] = static_cast<T>(loss);
  check_finite(out, "info_nce_symmetric");
  if (!track) return out;
  out.set_requires_grad();
  tape->record([=]() mutable {
    const Accum go = out.grad()[0];
    const Accum scale = go / (2.0 * static_cast<Accum>(b));
    std::vector<Accum> dz(b * b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        dz[i * b + j] = scale * (p_row[i * b + j] + p_col[i * b + j] - (i == j ? 2.0 : 0.0));
    if (fq.requires_grad()) {
      auto gq = fq.grad();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < c; ++k) {
          Accum acc = 0;
          for (std::size_t j = 0; j < b; ++j) acc += dz[i * b + j] * fr[j * c + k];
          gq[i * c + k] += static_cast<T>(acc / t);
        }
    }
    if (fr.requires_grad()) {
      auto gr = fr.grad();
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k) {
          Accum acc = 0;
          for (std::size_t i = 0; i < b; ++i) acc += dz[i * b + j] * fq[i * c + k];
          gr[j * c + k] += static_cast<T>(acc / t);
        }
    }
    if (tau.requires_grad()) {
      Accum acc = 0;
      for (std::size_t k = 0; k < b * b; ++k) acc += dz[k] * g[k];
      tau.grad()[0] += static_cast<T>(-acc / (t * t));
    }
  });
  return out;
}

template <typename T>
BasicTensor<T> info_nce_symmetric(const BasicTensor<T>& fq, const BasicTensor<T>& fr, double tau,
                                  Tape<T>* tape = nullptr) {
  return info_nce_symmetric(fq, fr, BasicTensor<T>::scalar(static_cast<T>(tau)), tape);
}

/// Cosine similarity of a single embedding f[C] with every pixel of F[H,W,C].
template <typename T>
BasicTensor<T> similarity_map(const BasicTensor<T>& f, const BasicTensor<T>& fmap, Tape<T>* tape = nullptr) {
  if (f.dim() != 1 || fmap.dim() != 3 || fmap.extent(2) != f.extent(0)) {
    throw ShapeError("similarity_map: expected f[C] and F[H,W,C], got " + shape_str(f.shape()) + " and " +
                     shape_str(fmap.shape()));
  }
  constexpr Accum kEps = 1e-8;
  const std::size_t h = fmap.extent(0), w = fmap.extent(1), c = f.extent(0), n = h * w;
  Accum fu = 0;
  for (std::size_t k = 0; k < c; ++k) fu += Accum(f[k]) * f[k];
  const Accum nu_raw = std::sqrt(fu), nu = std::max(nu_raw, kEps);
  std::vector<Accum> nv(n), nv_raw(n), cosv(n);
  const bool track = tracks(tape, {&f, &fmap});
  BasicTensor<T> m({h, w});
  for (std::size_t p = 0; p < n; ++p) {
    Accum dot = 0, vv = 0;
    for (std::size_t k = 0; k < c; ++k) {
      dot += Accum(f[k]) * fmap[p * c + k];
      vv += Accum(fmap[p * c + k]) * fmap[p * c + k];
    }
    nv_raw[p] = std::sqrt(vv);
    nv[p] = std::max(nv_raw[p], kEps);
    cosv[p] = dot / (nu * nv[p]);
    m[p] = static_cast<T>(cosv[p]);
  }
  check_finite(m, "similarity_map");
  if (!track) return m;
  m.set_requires_grad();
  tape->record([=]() mutable {
    const auto gm = m.grad();
    if (f.requires_grad()) {
      auto gf = f.grad();
      std::vector<Accum> acc(c, 0.0);
      for (std::size_t p = 0; p < n; ++p) {
        const Accum g = gm[p];
        if (g == 0) continue;
        for (std::size_t k = 0; k < c; ++k) {
          Accum d = fmap[p * c + k] / (nu * nv[p]);
          if (nu_raw >= kEps) d -= cosv[p] * f[k] / (nu * nu);
          acc[k] += g * d;
        }
      }
      for (std::size_t k = 0; k < c; ++k) gf[k] += static_cast<T>(acc[k]);
    }
    if (fmap.requires_grad()) {
      auto gF = fmap.grad();
      for (std::size_t p = 0; p < n; ++p) {
        const Accum g = gm[p];
        if (g == 0) continue;
        for (std::size_t k = 0; k < c; ++k) {
          Accum d = f[k] / (nu * nv[p]);
          if (nv_raw[p] >= kEps) d -= cosv[p] * fmap[p * c + k] / (nv[p] * nv[p]);
          gF[p * c + k] += static_cast<T>(g * d);
        }
      }
    }
  });
  return m;
}

/// Soft-argmax: softmax(M/temp)-weighted centroid of the pixel grid.
/// Returns [2] = (x̂ column, ŷ row).
template <typename T>
BasicTensor<T> soft_match(const BasicTensor<T>& m, double match_temp, Tape<T>* tape = nullptr) {
  if (m.dim() != 2) throw ShapeError("soft_match: expected [H,W], got " + shape_str(m.shape()));
  if (!(match_temp > 0)) throw ArgumentError("soft_match: match_temp must be > 0");
  const std::size_t h = m.extent(0), w = m.extent(1), n = h * w;
  Accum mx = -std::numeric_limits<Accum>::infinity();
  for (std::size_t p = 0; p < n; ++p) mx = std::max<Accum>(mx, m[p]);
  std::vector<Accum> wts(n);
  Accum z = 0;
  for (std::size_t p = 0; p < n; ++p) z += wts[p] = std::exp((m[p] - mx) / match_temp);
  Accum xh = 0, yh = 0;
  for (std::size_t p = 0; p < n; ++p) {
    wts[p] /= z;
    xh += wts[p] * static_cast<Accum>(p % w);
    yh += wts[p] * static_cast<Accum>(p / w);
  }
  // Keep the estimate inside the grid's convex hull despite rounding.
  xh = std::clamp(xh, 0.0, static_cast<Accum>(w - 1));
  yh = std::clamp(yh, 0.0, static_cast<Accum>(h - 1));
  const bool track = tracks(tape, {&m});
  BasicTensor<T> out({2});
  out[0] = static_cast<T>(xh);
  out[1] = static_cast<T>(yh);
  if (!track) return out;
  out.set_requires_grad();
  tape->record([=]() mutable {
    const Accum gx = out.grad()[0], gy = out.grad()[1];
    auto gm = m.grad();
    for (std::size_t p = 0; p < n; ++p) {
      const Accum col = static_cast<Accum>(p % w), row = static_cast<Accum>(p / w);
      gm[p] += static_cast<T>(wts[p] / match_temp * (gx * (col - xh) + gy * (row - yh)));
    }
  });
  return out;
}

/// Euclidean distance between a regressed position [2] and a fixed target.
template <typename T>
BasicTensor<T> position_distance(const BasicTensor<T>& reg, Point2 target, Tape<T>* tape = nullptr) {
  if (reg.numel() != 2) throw ShapeError("position_distance: expected a 2-vector");
  const Accum dx = Accum(reg[0]) - target.x, dy = Accum(reg[1]) - target.y;
  const Accum d = std::hypot(dx, dy);
  const bool track = tracks(tape, {&reg});
  BasicTensor<T> out({1});
  out[0] = static_cast<T>(d);
  if (!track) return out;
  out.set_requires_grad();
  tape->record([=]() mutable {
    if (d == 0) return;  // subgradient 0 at the minimum
    const Accum g = out.grad()[0];
    auto gr = reg.grad();
    gr[0] += static_cast<T>(g * dx / d);
    gr[1] += static_cast<T>(g * dy / d);
  });
  return out;
}

inline constexpr std::array<int, 3> kPyramidFactors = {1, 2, 4};

/// Per-level intermediate results of the position loss, for inspection.
template <typename T>
struct PcmLevel {
  int factor = 1;
  Point2 prior;
  BasicTensor<T> street_map, bev_map;
  BasicTensor<T> street_reg, bev_reg;
};

/// Σ over pyramid levels (average pooling by 1, 2, 4) of the distance
/// between the prior and the soft-matched street and BEV positions.
template <typename T>
BasicTensor<T> pcm_loss(const BasicTensor<T>& f_street, const BasicTensor<T>& f_bev, const BasicTensor<T>& aerial_map,
                        const PositionPrior& pos, double match_temp, Tape<T>* tape = nullptr,
                        std::vector<PcmLevel<T>>* levels_out = nullptr) {
  instrumentation().pcm_loss.fetch_add(1, std::memory_order_relaxed);
  if (aerial_map.dim() != 3) throw ShapeError("pcm_loss: expected F_a[H,W,C], got " + shape_str(aerial_map.shape()));
  const std::size_t h = aerial_map.extent(0), w = aerial_map.extent(1);
  if (h % 4 != 0 || w % 4 != 0) {
    throw ShapeError("pcm_loss: feature map " + shape_str(aerial_map.shape()) + " not divisible by 4");
  }
  if (!(pos.x >= 0 && pos.y >= 0 && pos.x <= double(w - 1) && pos.y <= double(h - 1))) {
    throw ArgumentError("pcm_loss: position prior (" + std::to_string(pos.x) + ", " + std::to_string(pos.y) +
                        ") outside the level-1 map");
  }
  std::vector<BasicTensor<T>> terms;
  for (int factor : kPyramidFactors) {
    auto level = factor == 1 ? aerial_map : ops::avg_pool2d(aerial_map, factor, tape);
    const Point2 target = pos.at_factor(factor);
    auto ms = similarity_map(f_street, level, tape);
    auto mb = similarity_map(f_bev, level, tape);
    auto rs = soft_match(ms, match_temp, tape);
    auto rb = soft_match(mb, match_temp, tape);
    terms.push_back(position_distance(rs, target, tape));
    terms.push_back(position_distance(rb, target, tape));
    if (levels_out) levels_out->push_back({factor, target, ms, mb, rs, rb});
  }
  return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0), tape);
}

/// Embeddings of one batch. `bev` may be left undefined when no BEV term
/// has a non-zero weight.
template <typename T>
struct BatchFeatures {
  BasicTensor<T> street;      // f^s  [B,C]
  BasicTensor<T> bev;         // f^bev [B,C]
  BasicTensor<T> aerial;      // f^a  [B,C]
  BasicTensor<T> aerial_map;  // F^a  [B,H,W,C]
};

template <typename T>
struct LossTerms {
  BasicTensor<T> total;
  BasicTensor<T> street_aerial;
  BasicTensor<T> bev_street;
  BasicTensor<T> bev_aerial;
  BasicTensor<T> pcm;  // mean over the batch
};

/// L = L(street,aerial) + λ1·L(bev,street) + λ2·L(bev,aerial) + λ3·mean_b L_PCM.
/// Terms with zero weight are not evaluated.
template <typename T>
LossTerms<T> total_loss(const BatchFeatures<T>& feats, const std::vector<PositionPrior>& priors,
                        const LossWeights& weights, const BasicTensor<T>& tau, double match_temp,
                        Tape<T>* tape = nullptr) {
  if (weights.lambda_bev_street < 0 || weights.lambda_bev_aerial < 0 || weights.lambda_pcm < 0) {
    throw ArgumentError("total_loss: loss weights must be non-negative");
  }
  const auto& fs = feats.street;
  const auto& fa = feats.aerial;
  if (fs.dim() != 2 || fa.shape() != fs.shape()) {
    throw ShapeError("total_loss: street/aerial embeddings must share [B,C]");
  }
  const std::size_t b = fs.extent(0);
  const bool need_bev = weights.lambda_bev_street > 0 || weights.lambda_bev_aerial > 0 || weights.lambda_pcm > 0;
  if (need_bev && (!feats.bev.defined() || feats.bev.shape() != fs.shape())) {
    throw ShapeError("total_loss: BEV embeddings missing or inconsistent with batch size");
  }

  LossTerms<T> out;
  out.street_aerial = info_nce_symmetric(fs, fa, tau, tape);
  if (weights.lambda_bev_street > 0) out.bev_street = info_nce_symmetric(feats.bev, fs, tau, tape);
  if (weights.lambda_bev_aerial > 0) out.bev_aerial = info_nce_symmetric(feats.bev, fa, tau, tape);
  if (weights.lambda_pcm > 0) {
    const auto& fmap = feats.aerial_map;
    if (fmap.dim() != 4 || fmap.extent(0) != b || fmap.extent(3) != fs.extent(1)) {
      throw ShapeError("total_loss: aerial feature map must be [B,H,W,C]");
    }
    if (priors.size() != b) throw ShapeError("total_loss: one position prior per pair required");
    std::vector<BasicTensor<T>> per_sample;
    for (std::size_t i = 0; i < b; ++i) {
      per_sample.push_back(pcm_loss(ops::select(fs, i, tape), ops::select(feats.bev, i, tape),
                                    ops::select(fmap, i, tape), priors[i], match_temp, tape));
    }
    out.pcm = ops::weighted_sum(per_sample, std::vector<double>(b, 1.0 / static_cast<double>(b)), tape);
  }
  out.total = ops::weighted_sum<T>({out.street_aerial, out.bev_street, out.bev_aerial, out.pcm},
                                   {1.0, weights.lambda_bev_street, weights.lambda_bev_aerial, weights.lambda_pcm},
                                   tape);
  return out;
}

}  // namespace cvgeo
