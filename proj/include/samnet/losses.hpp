#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "samnet/autograd.hpp"
#include "samnet/sampling.hpp"

namespace samnet {

// max(-log K, tau) as written, or min(-log K, tau) as an alternative reading.
enum class Truncation { floor, cap };

// Objective used for the attribute matching term: the cross-entropy over window softmax
// probabilities, or the bare patch distance D(i, i) summed over pixels.
enum class MatchObjective { cross_entropy, patch_distance };

struct LossConfig {
  double tau = 4.0;
  int q_radius = 4;
  int patch_radius = 1;
  double w_content = 1.0;
  double w_smooth = 1e-4;
  double w_recon = 1.0;  // stage-1 autoencoder reconstruction (0 disables)
  Truncation truncation = Truncation::floor;
  MatchObjective objective = MatchObjective::cross_entropy;

  void validate() const {
    if (tau < 0) throw ArgumentError("loss config: tau must be >= 0");
    if (q_radius < 0 || patch_radius < 0) throw ArgumentError("loss config: radii must be >= 0");
    if (w_content < 0 || w_smooth < 0 || w_recon < 0) throw ArgumentError("loss config: weights must be >= 0");
  }
};

namespace loss_detail {

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

template <class T>
T sq_dist(const Tensor<T>& a, int ay, int ax, const Tensor<T>& b, int by, int bx) {
  T s = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const T d = a.at(c, ay, ax) - b.at(c, by, bx);
    s += d * d;
  }
  return s;
}

// D[(qy, qx), i] = sum_{j in N_i} ||a_{c(j)} - b_{c(c(j) + q - i)}||^2 for every displacement
// d = q - i of the (2Q+1)^2 window, with c() the border clamp.
template <class T>
Tensor<T> patch_distance_volume(const Tensor<T>& a, const Tensor<T>& b, int q_radius, int patch_radius) {
  const int h = a.height(), w = a.width(), win = 2 * q_radius + 1;
  Tensor<T> D(win * win, h, w);
  std::vector<T> e(static_cast<std::size_t>(h) * w);
  for (int m = 0; m < win * win; ++m) {
    const int dy = m / win - q_radius, dx = m % win - q_radius;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) e[y * w + x] = sq_dist(a, y, x, b, clampi(y + dy, 0, h - 1), clampi(x + dx, 0, w - 1));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T s = 0;
        for (int py = -patch_radius; py <= patch_radius; ++py)
          for (int px = -patch_radius; px <= patch_radius; ++px)
            s += e[clampi(y + py, 0, h - 1) * w + clampi(x + px, 0, w - 1)];
        D.at(m, y, x) = s;
      }
  }
  return D;
}

// Adjoint of patch_distance_volume for an upstream gradient gD.
template <class T>
void patch_distance_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& gD, int q_radius,
                             int patch_radius, Tensor<T>* ga, Tensor<T>* gb) {
  const int h = a.height(), w = a.width(), win = 2 * q_radius + 1, c = a.channels();
  std::vector<T> ge(static_cast<std::size_t>(h) * w);
  for (int m = 0; m < win * win; ++m) {
    const int dy = m / win - q_radius, dx = m % win - q_radius;
    std::fill(ge.begin(), ge.end(), T(0));
    bool any = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T gv = gD.at(m, y, x);
        if (gv == T(0)) continue;
        any = true;
        for (int py = -patch_radius; py <= patch_radius; ++py)
          for (int px = -patch_radius; px <= patch_radius; ++px)
            ge[clampi(y + py, 0, h - 1) * w + clampi(x + px, 0, w - 1)] += gv;
      }
    if (!any) continue;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T gv = ge[y * w + x];
        if (gv == T(0)) continue;
        const int by = clampi(y + dy, 0, h - 1), bx = clampi(x + dx, 0, w - 1);
        for (int ch = 0; ch < c; ++ch) {
          const T d = T(2) * gv * (a.at(ch, y, x) - b.at(ch, by, bx));
          if (ga) ga->at(ch, y, x) += d;
          if (gb) gb->at(ch, by, bx) -= d;
        }
      }
  }
}

inline bool q_in_bounds(int m, int win, int q_radius, int y, int x, int h, int w) {
  const int qy = y + m / win - q_radius, qx = x + m % win - q_radius;
  return qy >= 0 && qy < h && qx >= 0 && qx < w;
}

}  // namespace loss_detail

// Patch distance D(i, q) between the patch around i in a and the patch around q in b.
template <class T>
T patch_distance(const Tensor<T>& a, const Tensor<T>& b, int iy, int ix, int qy, int qx, int patch_radius) {
  a.require_same_shape(b, "patch_distance");
  const int h = a.height(), w = a.width();
  using loss_detail::clampi;
  T s = 0;
  for (int py = -patch_radius; py <= patch_radius; ++py)
    for (int px = -patch_radius; px <= patch_radius; ++px) {
      const int jy = clampi(iy + py, 0, h - 1), jx = clampi(ix + px, 0, w - 1);
      s += loss_detail::sq_dist(a, jy, jx, b, clampi(jy - iy + qy, 0, h - 1), clampi(jx - ix + qx, 0, w - 1));
    }
  return s;
}

// K_i for every pixel, (1, H, W): softmax of -D(i, q) over in-bounds q of the Q window,
// evaluated at q = i.
template <class T>
Tensor<T> sam_probability(const Tensor<T>& stylized, const Tensor<T>& warped, int q_radius, int patch_radius) {
  stylized.require_same_shape(warped, "sam_probability");
  const int h = stylized.height(), w = stylized.width(), win = 2 * q_radius + 1, c0 = win * win / 2;
  const Tensor<T> D = loss_detail::patch_distance_volume(stylized, warped, q_radius, patch_radius);
  Tensor<T> K(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int m = 0; m < win * win; ++m)
        if (loss_detail::q_in_bounds(m, win, q_radius, y, x, h, w)) mx = std::max(mx, -D.at(m, y, x));
      T z = 0;
      for (int m = 0; m < win * win; ++m)
        if (loss_detail::q_in_bounds(m, win, q_radius, y, x, h, w)) z += std::exp(-D.at(m, y, x) - mx);
      K.at(0, y, x) = std::exp(-D.at(c0, y, x) - mx) / z;
    }
  return K;
}

// L_AM = sum_i max(-log K_i, tau) (or min with Truncation::cap). Gradients vanish on
// pixels held at tau.
template <class T>
Var sam_loss(Graph<T>& g, Var stylized, Var warped, const LossConfig& cfg) {
  const auto& S = g.value(stylized);
  const auto& W = g.value(warped);
  S.require_same_shape(W, "sam_loss");
  const int h = S.height(), w = S.width(), qr = cfg.q_radius, win = 2 * qr + 1, k = win * win, c0 = k / 2;
  const Tensor<T> D = loss_detail::patch_distance_volume(S, W, qr, cfg.patch_radius);
  auto gD = std::make_shared<Tensor<T>>(D.shape());  // d loss / d D, filled now, scaled by upstream later
  const T tau = static_cast<T>(cfg.tau);
  T total = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int m = 0; m < k; ++m)
        if (loss_detail::q_in_bounds(m, win, qr, y, x, h, w)) mx = std::max(mx, -D.at(m, y, x));
      T z = 0;
      for (int m = 0; m < k; ++m)
        if (loss_detail::q_in_bounds(m, win, qr, y, x, h, w)) z += std::exp(-D.at(m, y, x) - mx);
      const T nll = D.at(c0, y, x) + mx + std::log(z);  // -log K_i
      const bool active = cfg.truncation == Truncation::floor ? nll > tau : nll < tau;
      total += active ? nll : tau;
      if (!active) continue;
      for (int m = 0; m < k; ++m)
        if (loss_detail::q_in_bounds(m, win, qr, y, x, h, w)) gD->at(m, y, x) = -std::exp(-D.at(m, y, x) - mx) / z;
      gD->at(c0, y, x) += T(1);
    }
  Tensor<T> out(std::vector<int>{1});
  out[0] = total;
  const int pr = cfg.patch_radius;
  return g.record(std::move(out), {stylized, warped}, [=](Graph<T>& gr, Var self) {
    Tensor<T> scaled = *gD;
    scaled *= gr.grad(self)[0];
    loss_detail::patch_distance_backward(gr.value(stylized), gr.value(warped), scaled, qr, pr,
                                         gr.requires_grad(stylized) ? &gr.grad(stylized) : nullptr,
                                         gr.requires_grad(warped) ? &gr.grad(warped) : nullptr);
  });
}

// sum_i D(i, i): the patch-distance objective on its own.
template <class T>
Var patch_distance_loss(Graph<T>& g, Var stylized, Var warped, int patch_radius) {
  const auto& S = g.value(stylized);
  S.require_same_shape(g.value(warped), "patch_distance_loss");
  const Tensor<T> D = loss_detail::patch_distance_volume(S, g.value(warped), 0, patch_radius);
  const int h = S.height(), w = S.width();
  Tensor<T> out(std::vector<int>{1});
  out[0] = sum(D);
  return g.record(std::move(out), {stylized, warped}, [=](Graph<T>& gr, Var self) {
    Tensor<T> gD(std::vector<int>{1, h, w}, gr.grad(self)[0]);
    loss_detail::patch_distance_backward(gr.value(stylized), gr.value(warped), gD, 0, patch_radius,
                                         gr.requires_grad(stylized) ? &gr.grad(stylized) : nullptr,
                                         gr.requires_grad(warped) ? &gr.grad(warped) : nullptr);
  });
}

// sum ||a - b||^2 over all entries.
template <class T>
Var squared_error(Graph<T>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  A.require_same_shape(B, "squared_error");
  Tensor<T> out(std::vector<int>{1});
  for (std::size_t i = 0; i < A.size(); ++i) out[0] += (A[i] - B[i]) * (A[i] - B[i]);
  return g.record(std::move(out), {a, b}, [=](Graph<T>& gr, Var self) {
    const T s = gr.grad(self)[0];
    const auto& Av = gr.value(a);
    const auto& Bv = gr.value(b);
    if (gr.requires_grad(a)) {
      auto& ga = gr.grad(a);
      for (std::size_t i = 0; i < Av.size(); ++i) ga[i] += T(2) * s * (Av[i] - Bv[i]);
    }
    if (gr.requires_grad(b)) {
      auto& gb = gr.grad(b);
      for (std::size_t i = 0; i < Av.size(); ++i) gb[i] -= T(2) * s * (Av[i] - Bv[i]);
    }
  });
}

// L_C = sum_i ||F^{s<-t}_i - F^s_i||^2.
template <class T>
Var content_loss(Graph<T>& g, Var stylized, Var source) {
  return squared_error(g, stylized, source);
}

// Sum of squared horizontal and vertical neighbour differences.
template <class T>
Var smoothness_loss(Graph<T>& g, Var image) {
  const auto& I = g.value(image);
  const int c = I.channels(), h = I.height(), w = I.width();
  Tensor<T> out(std::vector<int>{1});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (x + 1 < w) out[0] += (I.at(ch, y, x + 1) - I.at(ch, y, x)) * (I.at(ch, y, x + 1) - I.at(ch, y, x));
        if (y + 1 < h) out[0] += (I.at(ch, y + 1, x) - I.at(ch, y, x)) * (I.at(ch, y + 1, x) - I.at(ch, y, x));
      }
  return g.record(std::move(out), {image}, [=](Graph<T>& gr, Var self) {
    const T s = T(2) * gr.grad(self)[0];
    const auto& Iv = gr.value(image);
    auto& gi = gr.grad(image);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (x + 1 < w) {
            const T d = s * (Iv.at(ch, y, x + 1) - Iv.at(ch, y, x));
            gi.at(ch, y, x + 1) += d;
            gi.at(ch, y, x) -= d;
          }
          if (y + 1 < h) {
            const T d = s * (Iv.at(ch, y + 1, x) - Iv.at(ch, y, x));
            gi.at(ch, y + 1, x) += d;
            gi.at(ch, y, x) -= d;
          }
        }
  });
}

// Attribute matching term selected by cfg.objective.
template <class T>
Var attribute_matching_loss(Graph<T>& g, Var stylized, Var warped, const LossConfig& cfg) {
  if (cfg.objective == MatchObjective::patch_distance) return patch_distance_loss(g, stylized, warped, cfg.patch_radius);
  return sam_loss(g, stylized, warped, cfg);
}

struct LossTerms {
  double matching = 0, content = 0, smooth = 0, recon = 0, total = 0;
};

// ---- Tensor-level reductions ----

template <class T>
T sam_loss(const Tensor<T>& stylized, const Tensor<T>& warped, const LossConfig& cfg) {
  Graph<T> g(false);
  return g.value(sam_loss(g, g.input(stylized), g.input(warped), cfg))[0];
}

template <class T>
T content_loss(const Tensor<T>& stylized, const Tensor<T>& source) {
  Graph<T> g(false);
  return g.value(content_loss(g, g.input(stylized), g.input(source)))[0];
}

template <class T>
T smoothness_loss(const Tensor<T>& image) {
  Graph<T> g(false);
  return g.value(smoothness_loss(g, g.input(image)))[0];
}

// Plain matching baseline: sum_i ||F_s(i) - F_t(i + f_i)||^2, flow as (2, H, W) planes (dx, dy).
template <class T>
T matching_loss(const Tensor<T>& source, const Tensor<T>& target, const Tensor<T>& flow) {
  source.require_same_shape(target, "matching_loss");
  const int c = source.channels(), h = source.height(), w = source.width();
  if (flow.rank() != 3 || flow.channels() != 2 || flow.height() != h || flow.width() != w)
    throw ShapeError("matching_loss: flow must be (2, H, W)");
  T s = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const BilinearTap<T> tap(T(x) + flow.at(0, y, x), T(y) + flow.at(1, y, x), w, h);
      for (int ch = 0; ch < c; ++ch) {
        const T d = source.at(ch, y, x) - tap.value(target.channel(ch), w);
        s += d * d;
      }
    }
  return s;
}

// Non-parametric attribute baseline: sum_i sum_{j in N_i} ||F_styl(j) - F_t(j + f_i)||^2; j outside the grid skipped.
template <class T>
T attribute_loss(const Tensor<T>& stylized, const Tensor<T>& target, const Tensor<T>& flow, int patch_radius) {
  stylized.require_same_shape(target, "attribute_loss");
  const int c = stylized.channels(), h = stylized.height(), w = stylized.width();
  if (flow.rank() != 3 || flow.channels() != 2 || flow.height() != h || flow.width() != w)
    throw ShapeError("attribute_loss: flow must be (2, H, W)");
  T s = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int py = -patch_radius; py <= patch_radius; ++py)
        for (int px = -patch_radius; px <= patch_radius; ++px) {
          const int jy = y + py, jx = x + px;
          if (jy < 0 || jy >= h || jx < 0 || jx >= w) continue;
          const BilinearTap<T> tap(T(jx) + flow.at(0, y, x), T(jy) + flow.at(1, y, x), w, h);
          for (int ch = 0; ch < c; ++ch) {
            const T d = stylized.at(ch, jy, jx) - tap.value(target.channel(ch), w);
            s += d * d;
          }
        }
  return s;
}

}  // namespace samnet
