#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "samnet/autograd.hpp"

namespace samnet {

// Per-pixel similarity scores over a (2r+1)^2 displacement window. Displacement index
// m = (dy + r) * (2r + 1) + (dx + r). Entries whose target leaves the grid are excluded
// from every reduction by geometry; raw NCC volumes store -inf there, normalized ones 0.
template <class T>
struct CorrelationVolume {
  Tensor<T> scores;
  int radius = 0;

  int window() const noexcept { return 2 * radius + 1; }
  int displacements() const noexcept { return window() * window(); }
  int height() const { return scores.height(); }
  int width() const { return scores.width(); }
  int center() const noexcept { return displacements() / 2; }
  int dx(int m) const noexcept { return m % window() - radius; }
  int dy(int m) const noexcept { return m / window() - radius; }
  bool in_bounds(int m, int y, int x) const {
    const int ty = y + dy(m), tx = x + dx(m);
    return ty >= 0 && ty < height() && tx >= 0 && tx < width();
  }
  T at(int m, int y, int x) const { return scores.at(m, y, x); }
};

// Integer displacement field from winner-takes-all, (2, H, W) with planes (dx, dy).
struct IntFlow {
  int height = 0, width = 0;
  std::vector<int> dx, dy;
  int at_dx(int y, int x) const { return dx[y * width + x]; }
  int at_dy(int y, int x) const { return dy[y * width + x]; }
};

// Attribute weight of iteration l >= 1: 1 - exp(-l).
inline double lambda_at(int l) {
  if (l < 1) throw ArgumentError("lambda_at: iteration index must be >= 1");
  return 1.0 - std::exp(-static_cast<double>(l));
}

namespace corr_detail {

template <class T>
struct UnitField {
  Tensor<T> unit;        // per-pixel unit vectors (zero where the norm vanishes)
  std::vector<T> norm;  // per-pixel norms
};

template <class T>
UnitField<T> unit_vectors(const Tensor<T>& f) {
  UnitField<T> u{Tensor<T>(f.shape()), std::vector<T>(f.plane())};
  const int c = f.channels();
  const std::size_t n = f.plane();
  for (std::size_t i = 0; i < n; ++i) {
    T s = 0;
    for (int ci = 0; ci < c; ++ci) s += f[ci * n + i] * f[ci * n + i];
    u.norm[i] = std::sqrt(s);
    const T inv = u.norm[i] > T(0) ? T(1) / u.norm[i] : T(0);
    for (int ci = 0; ci < c; ++ci) u.unit[ci * n + i] = f[ci * n + i] * inv;
  }
  return u;
}

// Adjoint of the unit-vector map: g_raw = (g_unit - (g_unit . u) u) / |f|.
template <class T>
void unit_backward(const UnitField<T>& u, const Tensor<T>& g_unit, Tensor<T>& g_raw) {
  const int c = u.unit.channels();
  const std::size_t n = u.unit.plane();
  for (std::size_t i = 0; i < n; ++i) {
    if (u.norm[i] <= T(0)) continue;
    T dot = 0;
    for (int ci = 0; ci < c; ++ci) dot += g_unit[ci * n + i] * u.unit[ci * n + i];
    const T inv = T(1) / u.norm[i];
    for (int ci = 0; ci < c; ++ci) g_raw[ci * n + i] += (g_unit[ci * n + i] - dot * u.unit[ci * n + i]) * inv;
  }
}

inline void require_same_geometry(const std::vector<int>& a, const std::vector<int>& b, const char* where) {
  if (a.size() != 3 || b.size() != 3 || a != b) throw ShapeError(std::string(where) + ": feature maps disagree in shape");
}

}  // namespace corr_detail

// Cosine similarity volume; out-of-bounds entries are filled with `outside`.
template <class T>
Var cosine_volume(Graph<T>& g, Var source, Var target, int radius, T outside = T(0)) {
  const auto& S = g.value(source);
  const auto& F = g.value(target);
  if (S.channels() != F.channels()) throw ShapeError("cosine_volume: channel mismatch");
  corr_detail::require_same_geometry(S.shape(), F.shape(), "cosine_volume");
  const int c = S.channels(), h = S.height(), w = S.width(), win = 2 * radius + 1;
  const std::size_t n = S.plane();
  auto us = std::make_shared<corr_detail::UnitField<T>>(corr_detail::unit_vectors(S));
  auto ut = std::make_shared<corr_detail::UnitField<T>>(corr_detail::unit_vectors(F));
  Tensor<T> vol(win * win, h, w, outside);
  for (int m = 0; m < win * win; ++m) {
    const int dy = m / win - radius, dx = m % win - radius;
    for (int y = 0; y < h; ++y) {
      const int ty = y + dy;
      if (ty < 0 || ty >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int tx = x + dx;
        if (tx < 0 || tx >= w) continue;
        const std::size_t i = y * w + x, t = ty * w + tx;
        T s = 0;
        for (int ci = 0; ci < c; ++ci) s += us->unit[ci * n + i] * ut->unit[ci * n + t];
        vol.at(m, y, x) = s;
      }
    }
  }
  return g.record(std::move(vol), {source, target}, [=](Graph<T>& gr, Var self) {
    const auto& gv = gr.grad(self);
    Tensor<T> gus(us->unit.shape()), gut(ut->unit.shape());
    for (int m = 0; m < win * win; ++m) {
      const int dy = m / win - radius, dx = m % win - radius;
      for (int y = 0; y < h; ++y) {
        const int ty = y + dy;
        if (ty < 0 || ty >= h) continue;
        for (int x = 0; x < w; ++x) {
          const int tx = x + dx;
          if (tx < 0 || tx >= w) continue;
          const T gs = gv.at(m, y, x);
          if (gs == T(0)) continue;
          const std::size_t i = y * w + x, t = ty * w + tx;
          for (int ci = 0; ci < c; ++ci) {
            gus[ci * n + i] += gs * ut->unit[ci * n + t];
            gut[ci * n + t] += gs * us->unit[ci * n + i];
          }
        }
      }
    }
    if (gr.requires_grad(source)) corr_detail::unit_backward(*us, gus, gr.grad(source));
    if (gr.requires_grad(target)) corr_detail::unit_backward(*ut, gut, gr.grad(target));
  });
}

// Clamps negatives to zero and divides each pixel's window vector by its L2 norm
// (guarded by eps). Out-of-bounds entries become 0.
template <class T>
Var normalize_volume(Graph<T>& g, Var raw, int radius, T eps = T(1e-8)) {
  const auto& R = g.value(raw);
  const int k = R.channels(), h = R.height(), w = R.width(), win = 2 * radius + 1;
  if (k != win * win) throw ShapeError("normalize_volume: channel count does not match radius");
  const std::size_t n = R.plane();
  Tensor<T> out(R.shape());
  auto denom = std::make_shared<std::vector<T>>(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      T s = 0;
      for (int m = 0; m < k; ++m) {
        const int ty = y + m / win - radius, tx = x + m % win - radius;
        if (ty < 0 || ty >= h || tx < 0 || tx >= w) continue;
        const T v = std::max(R[m * n + i], T(0));
        out[m * n + i] = v;
        s += v * v;
      }
      (*denom)[i] = std::max(std::sqrt(s), eps);
      for (int m = 0; m < k; ++m) out[m * n + i] /= (*denom)[i];
    }
  auto outv = std::make_shared<Tensor<T>>(out);
  return g.record(std::move(out), {raw}, [=](Graph<T>& gr, Var self) {
    const auto& go = gr.grad(self);
    const auto& Rv = gr.value(raw);
    auto& gi = gr.grad(raw);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = (*denom)[i];
      // When the norm exceeds eps: d u / d v = (I - u u^T) / d; otherwise u = v / eps.
      T dot = 0;
      const bool normalized = d > eps;
      if (normalized)
        for (int m = 0; m < k; ++m) dot += go[m * n + i] * (*outv)[m * n + i];
      for (int m = 0; m < k; ++m) {
        if (!(Rv[m * n + i] > T(0))) continue;
        const T u = (*outv)[m * n + i];
        gi[m * n + i] += (go[m * n + i] - (normalized ? dot * u : T(0))) / d;
      }
    }
  });
}

// Pre-normalization blended similarity:
//   (1 - lambda) cos(F_s_i, F_w_p) + lambda cos(F_styl_i, F_w_p).
template <class T>
Var blended_scores(Graph<T>& g, Var source, Var stylized, Var warped, T lambda, int radius) {
  corr_detail::require_same_geometry(g.value(source).shape(), g.value(stylized).shape(), "blended_correlation");
  corr_detail::require_same_geometry(g.value(source).shape(), g.value(warped).shape(), "blended_correlation");
  Var content = cosine_volume(g, source, warped, radius);
  Var attribute = cosine_volume(g, stylized, warped, radius);
  return ops::mix(g, content, attribute, lambda);
}

template <class T>
Var blended_correlation(Graph<T>& g, Var source, Var stylized, Var warped, T lambda, int radius) {
  if (!(lambda >= T(0) && lambda < T(1))) throw ArgumentError("blended_correlation: lambda must lie in [0, 1)");
  return normalize_volume(g, blended_scores(g, source, stylized, warped, lambda, radius), radius);
}

// Confidence: softmax weight of the zero displacement over in-bounds entries.
template <class T>
Var confidence(Graph<T>& g, Var volume, int radius) {
  const auto& V = g.value(volume);
  const int k = V.channels(), h = V.height(), w = V.width(), win = 2 * radius + 1, c0 = k / 2;
  if (k != win * win) throw ShapeError("confidence: channel count does not match radius");
  const std::size_t n = V.plane();
  Tensor<T> alpha(1, h, w);
  auto prob = std::make_shared<Tensor<T>>(V.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      T mx = -std::numeric_limits<T>::infinity();
      for (int m = 0; m < k; ++m) {
        const int ty = y + m / win - radius, tx = x + m % win - radius;
        if (ty >= 0 && ty < h && tx >= 0 && tx < w) mx = std::max(mx, V[m * n + i]);
      }
      T z = 0;
      for (int m = 0; m < k; ++m) {
        const int ty = y + m / win - radius, tx = x + m % win - radius;
        if (ty >= 0 && ty < h && tx >= 0 && tx < w) {
          (*prob)[m * n + i] = std::exp(V[m * n + i] - mx);
          z += (*prob)[m * n + i];
        }
      }
      for (int m = 0; m < k; ++m) (*prob)[m * n + i] /= z;
      alpha[i] = (*prob)[c0 * n + i];
    }
  return g.record(std::move(alpha), {volume}, [=](Graph<T>& gr, Var self) {
    const auto& ga = gr.grad(self);
    auto& gv = gr.grad(volume);
    for (std::size_t i = 0; i < n; ++i) {
      const T a = (*prob)[c0 * n + i];
      const T gi = ga[i];
      for (int m = 0; m < k; ++m) gv[m * n + i] -= gi * a * (*prob)[m * n + i];
      gv[c0 * n + i] += gi * a;
    }
  });
}

// ---- Tensor-level entry points (no gradient tracking) ----

template <class T>
CorrelationVolume<T> ncc_scores(const Tensor<T>& source, const Tensor<T>& target, int radius) {
  Graph<T> g(false);
  Var v = cosine_volume(g, g.input(source), g.input(target), radius, -std::numeric_limits<T>::infinity());
  return {g.value(v), radius};
}

template <class T>
CorrelationVolume<T> blended_correlation(const Tensor<T>& source, const Tensor<T>& stylized, const Tensor<T>& warped,
                                         T lambda, int radius) {
  Graph<T> g(false);
  Var v = blended_correlation(g, g.input(source), g.input(stylized), g.input(warped), lambda, radius);
  return {g.value(v), radius};
}

template <class T>
CorrelationVolume<T> blended_scores(const Tensor<T>& source, const Tensor<T>& stylized, const Tensor<T>& warped,
                                    T lambda, int radius) {
  Graph<T> g(false);
  Var v = blended_scores(g, g.input(source), g.input(stylized), g.input(warped), lambda, radius);
  return {g.value(v), radius};
}

template <class T>
Tensor<T> confidence(const CorrelationVolume<T>& volume) {
  Graph<T> g(false);
  return g.value(confidence(g, g.input(volume.scores), volume.radius));
}

// Winner-takes-all over scores box-summed on the (2a+1)^2 neighbourhood. Terms whose
// neighbour or target leaves the grid are skipped. Ties go to the smallest |m|, then
// the lowest displacement index.
template <class T>
IntFlow wta_flow(const CorrelationVolume<T>& volume, int aggregation_radius) {
  const int h = volume.height(), w = volume.width(), k = volume.displacements();
  if (aggregation_radius < 0) throw ArgumentError("wta_flow: negative aggregation radius");
  IntFlow flow{h, w, std::vector<int>(h * w), std::vector<int>(h * w)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = -1;
      T best_score = T(0);
      int best_norm = 0;
      for (int m = 0; m < k; ++m) {
        if (!volume.in_bounds(m, y, x)) continue;
        T s = 0;
        for (int ay = -aggregation_radius; ay <= aggregation_radius; ++ay)
          for (int ax = -aggregation_radius; ax <= aggregation_radius; ++ax) {
            const int jy = y + ay, jx = x + ax;
            if (jy < 0 || jy >= h || jx < 0 || jx >= w || !volume.in_bounds(m, jy, jx)) continue;
            s += volume.at(m, jy, jx);
          }
        const int norm = volume.dx(m) * volume.dx(m) + volume.dy(m) * volume.dy(m);
        if (best < 0 || s > best_score || (s == best_score && norm < best_norm)) {
          best = m;
          best_score = s;
          best_norm = norm;
        }
      }
      flow.dx[y * w + x] = volume.dx(best);
      flow.dy[y * w + x] = volume.dy(best);
    }
  return flow;
}

}  // namespace samnet
