#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "samnet/autograd.hpp"

namespace samnet::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

// (C*k*k) x (Ho*Wo) patch matrix with zero padding.
template <class T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int ho, int wo, std::vector<T>& col) {
  const int c = x.channels(), h = x.height(), w = x.width();
  col.assign(static_cast<std::size_t>(c) * k * k * ho * wo, T(0));
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    const T* src = x.channel(ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[iy * w + ix];
          }
        }
      }
  }
}

template <class T>
void col2im(const std::vector<T>& col, int k, int stride, int pad, int ho, int wo, Tensor<T>& gx) {
  const int c = gx.channels(), h = gx.height(), w = gx.width();
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    T* dst = gx.channel(ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * wo + ox];
          }
        }
      }
  }
}

}  // namespace detail

// 2-D convolution. x: (C,H,W), weight: (O,C,k,k), bias: (O). Zero padding.
template <class T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, int stride, int pad) {
  const auto& X = g.value(x);
  const auto& W = g.value(weight);
  if (W.rank() != 4 || W.dim(1) != X.channels() || W.dim(2) != W.dim(3))
    throw ShapeError("conv2d: weight " + W.shape_string() + " incompatible with input " + X.shape_string());
  const int o = W.dim(0), k = W.dim(2);
  const int ho = detail::conv_out(X.height(), k, stride, pad), wo = detail::conv_out(X.width(), k, stride, pad);
  if (ho <= 0 || wo <= 0) throw SizeError("conv2d: input " + X.shape_string() + " too small");
  const int ck = X.channels() * k * k;
  const int n = ho * wo;

  auto col = std::make_shared<std::vector<T>>();
  detail::im2col(X, k, stride, pad, ho, wo, *col);
  Tensor<T> Y(o, ho, wo);
  detail::MapMat<T> ym(Y.data(), o, n);
  ym.noalias() = detail::CMapMat<T>(W.data(), o, ck) * detail::CMapMat<T>(col->data(), ck, n);
  const auto& B = g.value(bias);
  for (int oc = 0; oc < o; ++oc) ym.row(oc).array() += B[oc];

  return g.record(std::move(Y), {x, weight, bias}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    detail::CMapMat<T> gym(gy.data(), o, n);
    if (gr.requires_grad(weight)) {
      auto& gw = gr.grad(weight);
      detail::MapMat<T>(gw.data(), o, ck).noalias() += gym * detail::CMapMat<T>(col->data(), ck, n).transpose();
    }
    if (gr.requires_grad(bias)) {
      auto& gb = gr.grad(bias);
      // Plain loop: a vectorized reduction would peel by address and break run-to-run determinism.
      for (int oc = 0; oc < o; ++oc) {
        T acc = 0;
        for (int i = 0; i < n; ++i) acc += gy[static_cast<std::size_t>(oc) * n + i];
        gb[oc] += acc;
      }
    }
    if (gr.requires_grad(x)) {
      std::vector<T> gcol(static_cast<std::size_t>(ck) * n);
      const auto& Wv = gr.value(weight);
      detail::MapMat<T>(gcol.data(), ck, n).noalias() = detail::CMapMat<T>(Wv.data(), o, ck).transpose() * gym;
      detail::col2im(gcol, k, stride, pad, ho, wo, gr.grad(x));
    }
  });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
  return g.record(std::move(y), {x}, [=](Graph<T>& gr, Var self) {
    const auto& xv = gr.value(x);
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > T(0)) gx[i] += gy[i];
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  Tensor<T> y = g.value(a);
  y += g.value(b);
  return g.record(std::move(y), {a, b}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    if (gr.requires_grad(a)) gr.grad(a) += gy;
    if (gr.requires_grad(b)) gr.grad(b) += gy;
  });
}

// (1 - w) * a + w * b for a constant weight w.
template <class T>
Var mix(Graph<T>& g, Var a, Var b, T w) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  A.require_same_shape(B, "mix");
  Tensor<T> y(A.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (T(1) - w) * A[i] + w * B[i];
  return g.record(std::move(y), {a, b}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad(a);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += (T(1) - w) * gy[i];
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad(b);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += w * gy[i];
    }
  });
}

// Nearest-neighbour resize to (H, W); an exact 2x upsample when sizes double.
template <class T>
Var upsample_nearest(Graph<T>& g, Var x, int out_h, int out_w) {
  const auto& X = g.value(x);
  const int c = X.channels(), h = X.height(), w = X.width();
  auto src_y = [=](int oy) { return std::min(h - 1, oy * h / out_h); };
  auto src_x = [=](int ox) { return std::min(w - 1, ox * w / out_w); };
  Tensor<T> y(c, out_h, out_w);
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) y.at(ci, oy, ox) = X.at(ci, src_y(oy), src_x(ox));
  return g.record(std::move(y), {x}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad(x);
    for (int ci = 0; ci < c; ++ci)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) gx.at(ci, src_y(oy), src_x(ox)) += gy.at(ci, oy, ox);
  });
}

template <class T>
Var clamp01(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.vec()) v = std::clamp(v, T(0), T(1));
  return g.record(std::move(y), {x}, [=](Graph<T>& gr, Var self) {
    const auto& xv = gr.value(x);
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > T(0) && xv[i] < T(1)) gx[i] += gy[i];
  });
}

// Per-channel zero-mean, unit-variance normalization over the spatial grid.
template <class T>
Var instance_norm(Graph<T>& g, Var x, T eps = T(1e-5)) {
  const auto& X = g.value(x);
  const int c = X.channels();
  const std::size_t n = X.plane();
  Tensor<T> y(X.shape());
  std::vector<T> inv_std(c);
  for (int ci = 0; ci < c; ++ci) {
    const T* s = X.channel(ci);
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += s[i];
    mean /= T(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (s[i] - mean) * (s[i] - mean);
    var /= T(n);
    inv_std[ci] = T(1) / std::sqrt(var + eps);
    T* d = y.channel(ci);
    for (std::size_t i = 0; i < n; ++i) d[i] = (s[i] - mean) * inv_std[ci];
  }
  auto yv = std::make_shared<Tensor<T>>(y);
  return g.record(std::move(y), {x}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad(x);
    for (int ci = 0; ci < c; ++ci) {
      const T* go = gy.channel(ci);
      const T* yo = yv->channel(ci);
      T mg = 0, myg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        mg += go[i];
        myg += go[i] * yo[i];
      }
      mg /= T(n);
      myg /= T(n);
      T* gi = gx.channel(ci);
      for (std::size_t i = 0; i < n; ++i) gi[i] += inv_std[ci] * (go[i] - mg - yo[i] * myg);
    }
  });
}

// 2x2 max pooling, stride 2 (VGG-style extractor).
template <class T>
Var maxpool2(Graph<T>& g, Var x) {
  const auto& X = g.value(x);
  const int c = X.channels(), h = X.height() / 2, w = X.width() / 2;
  if (h == 0 || w == 0) throw SizeError("maxpool2: input too small");
  Tensor<T> y(c, h, w);
  auto arg = std::make_shared<std::vector<int>>(y.size());
  for (int ci = 0; ci < c; ++ci)
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        int best = -1;
        T bv = T(0);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int iy = 2 * oy + dy, ix = 2 * ox + dx;
            const T v = X.at(ci, iy, ix);
            if (best < 0 || v > bv) {
              bv = v;
              best = (ci * X.height() + iy) * X.width() + ix;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(ci) * h + oy) * w + ox;
        y[o] = bv;
        (*arg)[o] = best;
      }
  return g.record(std::move(y), {x}, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    auto& gx = gr.grad(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*arg)[i]] += gy[i];
  });
}

// Weighted sum of scalar nodes.
template <class T>
Var weighted_sum(Graph<T>& g, const std::vector<std::pair<Var, T>>& terms) {
  Tensor<T> y(std::vector<int>{1});
  std::vector<Var> parents;
  for (auto& [v, w] : terms) {
    y[0] += w * g.value(v)[0];
    parents.push_back(v);
  }
  return g.record(std::move(y), parents, [terms](Graph<T>& gr, Var self) {
    const T gs = gr.grad(self)[0];
    for (auto& [v, w] : terms)
      if (gr.requires_grad(v)) gr.grad(v)[0] += w * gs;
  });
}

}  // namespace samnet::ops
