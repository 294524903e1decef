#pragma once

// Differentiable primitives. Layouts are channels-last: images and feature
// maps are [B,H,W,C], convolution kernels [k,k,Cin,Cout].

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cvgeo/parallel.hpp"
#include "cvgeo/tensor.hpp"

namespace cvgeo::ops {

namespace detail {

inline void expect_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

template <typename T>
BasicTensor<T> make_output(Shape shape, bool track) {
  BasicTensor<T> out(std::move(shape));
  if (track) out.set_requires_grad();
  return out;
}

}  // namespace detail

/// y = xW + b for x[B,Cin], W[Cin,Cout], b[Cout].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      Tape<T>* tape = nullptr) {
  detail::expect_rank(x.shape(), 2, "linear(x)");
  detail::expect_rank(w.shape(), 2, "linear(W)");
  detail::expect_rank(b.shape(), 1, "linear(b)");
  const std::size_t batch = x.extent(0), cin = x.extent(1), cout = w.extent(1);
  if (w.extent(0) != cin || b.extent(0) != cout) {
    throw ShapeError("linear: shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()) +
                     " + " + shape_str(b.shape()) + " do not conform");
  }
  const bool track = tracks(tape, {&x, &w, &b});
  auto y = detail::make_output<T>({batch, cout}, track);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t o = 0; o < cout; ++o) {
      Accum acc = b[o];
      for (std::size_t i = 0; i < cin; ++i) acc += Accum(x[r * cin + i]) * w[i * cout + o];
      y[r * cout + o] = static_cast<T>(acc);
    }
  }
  check_finite(y, "linear");
  if (track) {
    tape->record([=]() mutable {
      auto gy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t i = 0; i < cin; ++i) {
            Accum acc = 0;
            for (std::size_t o = 0; o < cout; ++o) acc += Accum(gy[r * cout + o]) * w[i * cout + o];
            gx[r * cin + i] += static_cast<T>(acc);
          }
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t o = 0; o < cout; ++o) {
            Accum acc = 0;
            for (std::size_t r = 0; r < batch; ++r) acc += Accum(x[r * cin + i]) * gy[r * cout + o];
            gw[i * cout + o] += static_cast<T>(acc);
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t o = 0; o < cout; ++o) {
          Accum acc = 0;
          for (std::size_t r = 0; r < batch; ++r) acc += gy[r * cout + o];
          gb[o] += static_cast<T>(acc);
        }
      }
    });
  }
  return y;
}

namespace detail {

template <typename T>
BasicTensor<T> conv2d_impl(const BasicTensor<T>& x, const BasicTensor<T>& k, const BasicTensor<T>* bias,
                           int stride, Tape<T>* tape) {
  expect_rank(x.shape(), 4, "conv2d(x)");
  expect_rank(k.shape(), 4, "conv2d(K)");
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  const std::size_t batch = x.extent(0), h = x.extent(1), w = x.extent(2), cin = x.extent(3);
  const std::size_t ks = k.extent(0), cout = k.extent(3);
  if (k.extent(1) != ks || ks % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_str(k.shape()));
  }
  if (k.extent(2) != cin) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " kernel " +
                     shape_str(k.shape()));
  }
  if (h < ks || w < ks) throw ShapeError("conv2d: input smaller than kernel");
  if (bias != nullptr && (bias->dim() != 1 || bias->extent(0) != cout)) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(cout) + "]");
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ks / 2);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t ho = (h + 2 * pad - ks) / s + 1, wo = (w + 2 * pad - ks) / s + 1;
  const bool track = tracks(tape, {&x, &k, bias});
  auto y = make_output<T>({batch, ho, wo, cout}, track);

  auto for_taps = [=](std::size_t oy, std::size_t ox, auto&& body) {
    for (std::size_t ky = 0; ky < ks; ++ky) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t kx = 0; kx < ks; ++kx) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - pad;
        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
        body(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ky, kx);
      }
    }
  };

  const T* xd = x.data().data();
  const T* kd = k.data().data();
  parallel_for(batch, [&](std::size_t bi) {
    std::vector<Accum> acc(cout);
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t o = 0; o < cout; ++o) acc[o] = bias ? Accum((*bias)[o]) : 0.0;
        for_taps(oy, ox, [&](std::size_t iy, std::size_t ix, std::size_t ky, std::size_t kx) {
          const T* xp = xd + ((bi * h + iy) * w + ix) * cin;
          const T* kp = kd + (ky * ks + kx) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const Accum xv = xp[c];
            const T* kr = kp + c * cout;
            for (std::size_t o = 0; o < cout; ++o) acc[o] += xv * kr[o];
          }
        });
        T* yp = y.data().data() + ((bi * ho + oy) * wo + ox) * cout;
        for (std::size_t o = 0; o < cout; ++o) yp[o] = static_cast<T>(acc[o]);
      }
  });
  check_finite(y, "conv2d");

  if (track) {
    BasicTensor<T> b = bias ? *bias : BasicTensor<T>();
    tape->record([=]() mutable {
      const auto gy = y.grad();
      const T* gyd = gy.data();
      const T* xd = x.data().data();
      const T* kd = k.data().data();
      const bool want_x = x.requires_grad(), want_k = k.requires_grad();
      const bool want_b = b.defined() && b.requires_grad();
      // Per-sample parameter gradients, reduced in sample order afterwards.
      std::vector<std::vector<Accum>> gk_parts(want_k ? batch : 0);
      T* gxd = want_x ? x.grad().data() : nullptr;
      parallel_for(batch, [&](std::size_t bi) {
        std::vector<Accum> gk;
        if (want_k) gk.assign(k.numel(), 0.0);
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const T* g = gyd + ((bi * ho + oy) * wo + ox) * cout;
            for_taps(oy, ox, [&](std::size_t iy, std::size_t ix, std::size_t ky, std::size_t kx) {
              const std::size_t xoff = ((bi * h + iy) * w + ix) * cin;
              const std::size_t koff = (ky * ks + kx) * cin * cout;
              for (std::size_t c = 0; c < cin; ++c) {
                const T* kr = kd + koff + c * cout;
                if (want_x) {
                  Accum a = 0;
                  for (std::size_t o = 0; o < cout; ++o) a += Accum(g[o]) * kr[o];
                  gxd[xoff + c] += static_cast<T>(a);
                }
                if (want_k) {
                  const Accum xv = xd[xoff + c];
                  Accum* gr = gk.data() + koff + c * cout;
                  for (std::size_t o = 0; o < cout; ++o) gr[o] += xv * g[o];
                }
              }
            });
          }
        if (want_k) gk_parts[bi] = std::move(gk);
      });
      if (want_k) {
        auto gk = k.grad();
        for (std::size_t i = 0; i < gk.size(); ++i) {
          Accum a = 0;
          for (std::size_t bi = 0; bi < batch; ++bi) a += gk_parts[bi][i];
          gk[i] += static_cast<T>(a);
        }
      }
      if (want_b) {
        auto gb = b.grad();
        const std::size_t rows = batch * ho * wo;
        for (std::size_t o = 0; o < cout; ++o) {
          Accum a = 0;
          for (std::size_t r = 0; r < rows; ++r) a += gyd[r * cout + o];
          gb[o] += static_cast<T>(a);
        }
      }
    });
  }
  return y;
}

}  // namespace detail

/// Zero-padded (k/2) cross-correlation; stride 1 preserves spatial size.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, int stride,
                      Tape<T>* tape = nullptr) {
  return detail::conv2d_impl<T>(x, kernel, nullptr, stride, tape);
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      int stride, Tape<T>* tape = nullptr) {
  return detail::conv2d_impl<T>(x, kernel, &bias, stride, tape);
}

/// Non-overlapping window mean over the two spatial axes. Accepts [B,H,W,C]
/// or a single map [H,W,C]; the rank is preserved.
template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, int factor, Tape<T>* tape = nullptr) {
  if (x.dim() != 3 && x.dim() != 4) throw ShapeError("avg_pool2d: expected rank 3 or 4, got " + shape_str(x.shape()));
  if (factor < 1) throw ArgumentError("avg_pool2d: factor must be >= 1");
  const std::size_t off = x.dim() - 3;
  const std::size_t batch = off ? x.extent(0) : 1;
  const std::size_t h = x.extent(off), w = x.extent(off + 1), c = x.extent(off + 2);
  const std::size_t f = static_cast<std::size_t>(factor);
  if (h % f != 0 || w % f != 0) {
    throw ShapeError("avg_pool2d: extents " + shape_str(x.shape()) + " not divisible by " +
                     std::to_string(factor));
  }
  const std::size_t ho = h / f, wo = w / f;
  Shape out_shape = x.shape();
  out_shape[off] = ho;
  out_shape[off + 1] = wo;
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(out_shape, track);
  const Accum inv = 1.0 / static_cast<Accum>(f * f);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          Accum acc = 0;
          for (std::size_t dy = 0; dy < f; ++dy)
            for (std::size_t dx = 0; dx < f; ++dx)
              acc += x[((b * h + oy * f + dy) * w + ox * f + dx) * c + ch];
          y[((b * ho + oy) * wo + ox) * c + ch] = static_cast<T>(acc * inv);
        }
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t iy = 0; iy < h; ++iy)
          for (std::size_t ix = 0; ix < w; ++ix)
            for (std::size_t ch = 0; ch < c; ++ch)
              gx[((b * h + iy) * w + ix) * c + ch] +=
                  static_cast<T>(gy[((b * ho + iy / f) * wo + ix / f) * c + ch] * inv);
    });
  }
  return y;
}

/// Mean over H and W: [B,H,W,C] -> [B,C].
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x, Tape<T>* tape = nullptr) {
  detail::expect_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t batch = x.extent(0), hw = x.extent(1) * x.extent(2), c = x.extent(3);
  if (hw == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>({batch, c}, track);
  const Accum inv = 1.0 / static_cast<Accum>(hw);
  std::vector<Accum> acc(c);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += x[(b * hw + p) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) y[b * c + ch] = static_cast<T>(acc[ch] * inv);
  }
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) gx[(b * hw + p) * c + ch] += static_cast<T>(gy[b * c + ch] * inv);
    });
  }
  return y;
}

/// Divides each row by max(||row||, eps). Rank 1 input is a single row.
template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, double eps = 1e-12, Tape<T>* tape = nullptr) {
  if (x.dim() != 1 && x.dim() != 2) throw ShapeError("l2_normalize: expected rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim() == 2 ? x.extent(0) : 1;
  const std::size_t c = x.dim() == 2 ? x.extent(1) : x.extent(0);
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(x.shape(), track);
  std::vector<Accum> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Accum ss = 0;
    for (std::size_t i = 0; i < c; ++i) ss += Accum(x[r * c + i]) * x[r * c + i];
    norms[r] = std::sqrt(ss);
    const Accum d = std::max(norms[r], eps);
    for (std::size_t i = 0; i < c; ++i) y[r * c + i] = static_cast<T>(x[r * c + i] / d);
  }
  check_finite(y, "l2_normalize");
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const Accum n = norms[r];
        if (n < eps) {
          // Constant denominator below the guard.
          for (std::size_t i = 0; i < c; ++i) gx[r * c + i] += static_cast<T>(gy[r * c + i] / eps);
          continue;
        }
        // d(x/n)/dx = (I - y y^T) / n
        Accum dot = 0;
        for (std::size_t i = 0; i < c; ++i) dot += Accum(gy[r * c + i]) * (x[r * c + i] / n);
        for (std::size_t i = 0; i < c; ++i)
          gx[r * c + i] += static_cast<T>((gy[r * c + i] - dot * (x[r * c + i] / n)) / n);
      }
    });
  }
  return y;
}

/// Softmax of x/temp over a flat vector, max-subtracted.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, double temp, Tape<T>* tape = nullptr) {
  if (!(temp > 0)) throw ArgumentError("softmax: temperature must be > 0");
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("softmax: empty input");
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(x.shape(), track);
  Accum mx = -std::numeric_limits<Accum>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max<Accum>(mx, x[i]);
  std::vector<Accum> e(n);
  Accum z = 0;
  for (std::size_t i = 0; i < n; ++i) z += e[i] = std::exp((x[i] - mx) / temp);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<T>(e[i] / z);
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      Accum dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += Accum(gy[i]) * y[i];
      for (std::size_t i = 0; i < n; ++i) gx[i] += static_cast<T>(Accum(y[i]) * (gy[i] - dot) / temp);
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x, Tape<T>* tape = nullptr) {
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
    });
  }
  return y;
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x, Tape<T>* tape = nullptr) {
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = static_cast<T>(std::exp(Accum(x[i])));
  check_finite(y, "exp");
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i];
    });
  }
  return y;
}

/// Sub-tensor at `index` along axis 0, with that axis removed.
template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, std::size_t index, Tape<T>* tape = nullptr) {
  if (x.dim() < 2) throw ShapeError("select: need rank >= 2, got " + shape_str(x.shape()));
  if (index >= x.extent(0)) throw ShapeError("select: index out of range");
  Shape inner(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = shape_numel(inner), off = index * n;
  const bool track = tracks(tape, {&x});
  auto y = detail::make_output<T>(inner, track);
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(off), n, y.data().begin());
  if (track) {
    tape->record([=]() mutable {
      auto gx = x.grad();
      const auto gy = y.grad();
      for (std::size_t i = 0; i < n; ++i) gx[off + i] += gy[i];
    });
  }
  return y;
}

/// Σ w_i · s_i over scalar tensors. Terms with zero weight are skipped
/// entirely, so they may be left undefined.
template <typename T>
BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>& terms, const std::vector<double>& weights,
                            Tape<T>* tape = nullptr) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms/weights length mismatch");
  bool track = false;
  Accum acc = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (weights[i] == 0.0) continue;
    acc += weights[i] * Accum(terms[i].item());
    track = track || tracks(tape, {&terms[i]});
  }
  auto y = detail::make_output<T>({1}, track);
  y[0] = static_cast<T>(acc);
  check_finite(y, "weighted_sum");
  if (track) {
    tape->record([=]() mutable {
      const Accum g = y.grad()[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (weights[i] == 0.0 || !terms[i].requires_grad()) continue;
        auto t = terms[i];
        t.grad()[0] += static_cast<T>(g * weights[i]);
      }
    });
  }
  return y;
}

}  // namespace cvgeo::ops
