#pragma once

#include <string>
#include <vector>

#include "samnet/correlation.hpp"
#include "samnet/nn.hpp"
#include "samnet/sampling.hpp"

namespace samnet {

// Per-pixel affine transform T_i = [A_i, f_i] on the level grid, stored as 6 planes
// (a00, a01, a10, a11, fx, fy). x points right, y down, origin at the top-left pixel centre.
namespace field {
inline constexpr int a00 = 0, a01 = 1, a10 = 2, a11 = 3, fx = 4, fy = 5, planes = 6;
}

template <class T>
Tensor<T> identity_field(int height, int width) {
  Tensor<T> f(field::planes, height, width);
  std::fill(f.channel(field::a00), f.channel(field::a00) + f.plane(), T(1));
  std::fill(f.channel(field::a11), f.channel(field::a11) + f.plane(), T(1));
  return f;
}

inline void require_field(const std::vector<int>& shape, const char* where) {
  if (shape.size() != 3 || shape[0] != field::planes)
    throw ShapeError(std::string(where) + ": affine field must have 6 planes");
}

// F^{t,l}_i = F_t(i + f_i), bilinear with border clamp. A_i is not used here.
template <class T>
Var warp_target(Graph<T>& g, Var features, Var affine) {
  const auto& F = g.value(features);
  const auto& A = g.value(affine);
  require_field(A.shape(), "warp_target");
  if (A.height() != F.height() || A.width() != F.width())
    throw ShapeError("warp_target: field " + A.shape_string() + " vs features " + F.shape_string());
  const int c = F.channels(), h = F.height(), w = F.width();
  Tensor<T> out(c, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const BilinearTap<T> tap(T(x) + A.at(field::fx, y, x), T(y) + A.at(field::fy, y, x), w, h);
      for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = tap.value(F.channel(ch), w);
    }
  return g.record(std::move(out), {features, affine}, [=](Graph<T>& gr, Var self) {
    const auto& Fv = gr.value(features);
    const auto& Av = gr.value(affine);
    const auto& gy = gr.grad(self);
    const bool gf = gr.requires_grad(features), ga = gr.requires_grad(affine);
    Tensor<T>* gF = gf ? &gr.grad(features) : nullptr;
    Tensor<T>* gA = ga ? &gr.grad(affine) : nullptr;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const BilinearTap<T> tap(T(x) + Av.at(field::fx, y, x), T(y) + Av.at(field::fy, y, x), w, h);
        T sx = 0, sy = 0;
        for (int ch = 0; ch < c; ++ch) {
          const T go = gy.at(ch, y, x);
          if (gF) tap.scatter(gF->channel(ch), w, go);
          if (gA) {
            sx += go * tap.dx(Fv.channel(ch), w);
            sy += go * tap.dy(Fv.channel(ch), w);
          }
        }
        if (gA) {
          gA->at(field::fx, y, x) += sx;
          gA->at(field::fy, y, x) += sy;
        }
      }
  });
}

// Encoder-decoder residual predictor W_G: 5x5 stem over the flattened window, three
// stride-2 levels down, three nearest-upsample levels up with additive skips, zero head.
template <class T>
struct MatcherParams {
  int window_size = 81;
  ConvLayer<T> stem, d1, d2, d3, u3, u2, u1, head;

  MatcherParams() = default;
  MatcherParams(int displacements, Rng& rng, int width = 32)
      : window_size(displacements),
        stem("matcher.stem", displacements, width, 5, 1, rng),
        d1("matcher.d1", width, width, 3, 2, rng),
        d2("matcher.d2", width, width, 3, 2, rng),
        d3("matcher.d3", width, width, 3, 2, rng),
        u3("matcher.u3", width, width, 3, 1, rng),
        u2("matcher.u2", width, width, 3, 1, rng),
        u1("matcher.u1", width, width, 3, 1, rng),
        head("matcher.head", width, field::planes, 3, 1, rng, /*zero=*/true) {}

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto* l : {&stem, &d1, &d2, &d3, &u3, &u2, &u1, &head}) l->collect(out);
    return out;
  }
};

template <class T>
Var predict_residual(Graph<T>& g, Var volume, MatcherParams<T>& p) {
  const auto& C = g.value(volume);
  if (C.rank() != 3 || C.channels() != p.window_size)
    throw ShapeError("predict_residual: volume " + C.shape_string() + " does not match a matcher trained on " +
                     std::to_string(p.window_size) + " displacements");
  auto up_add = [&](ConvLayer<T>& conv, Var x, Var skip) {
    const auto& s = g.value(skip);
    Var u = ops::upsample_nearest(g, x, s.height(), s.width());
    return ops::add(g, ops::relu(g, conv(g, u)), skip);
  };
  Var e0 = ops::relu(g, p.stem(g, volume));
  Var e1 = ops::relu(g, p.d1(g, e0));
  Var e2 = ops::relu(g, p.d2(g, e1));
  Var e3 = ops::relu(g, p.d3(g, e2));
  Var x = up_add(p.u3, e3, e2);
  x = up_add(p.u2, x, e1);
  x = up_add(p.u1, x, e0);
  return p.head(g, x);
}

// T^l = [I, 0] + sum of residuals. An empty list yields the identity on a (height, width) grid.
template <class T>
Var accumulate(Graph<T>& g, const std::vector<Var>& residuals, int height, int width) {
  Tensor<T> out = identity_field<T>(height, width);
  for (Var r : residuals) {
    const auto& R = g.value(r);
    if (!R.same_shape(out)) throw ShapeError("accumulate: residual " + R.shape_string() + " vs " + out.shape_string());
    out += R;
  }
  return g.record(std::move(out), residuals, [=](Graph<T>& gr, Var self) {
    const auto& gy = gr.grad(self);
    for (Var r : residuals)
      if (gr.requires_grad(r)) gr.grad(r) += gy;
  });
}

// T^l = T^{l-1} + dT (one recurrent step of accumulate).
template <class T>
Var accumulate_step(Graph<T>& g, Var previous, Var residual) {
  return ops::add(g, previous, residual);
}

// ---- Tensor-level entry points ----

template <class T>
Tensor<T> warp_target(const Tensor<T>& features, const Tensor<T>& affine) {
  Graph<T> g(false);
  return g.value(warp_target(g, g.input(features), g.input(affine)));
}

template <class T>
Tensor<T> predict_residual(const CorrelationVolume<T>& volume, const MatcherParams<T>& params) {
  Graph<T> g(false);
  auto& p = const_cast<MatcherParams<T>&>(params);  // no gradients recorded without tracking
  return g.value(predict_residual(g, g.input(volume.scores), p));
}

template <class T>
Tensor<T> accumulate(const std::vector<Tensor<T>>& residuals, int height, int width) {
  Tensor<T> out = identity_field<T>(height, width);
  for (const auto& r : residuals) {
    r.require_same_shape(out, "accumulate");
    out += r;
  }
  return out;
}

// Image-resolution flow (2, H, W) from a level field at `stride`. Pixel p sits at level
// coordinate c = p / stride; the four surrounding cells' affine predictions
// f_j + (A_j - I)(c - j) are bilinearly blended and rescaled to pixels.
template <class T>
Tensor<T> upsample_flow(const Tensor<T>& affine, int stride, int out_h, int out_w) {
  require_field(affine.shape(), "upsample_flow");
  const int h = affine.height(), w = affine.width();
  Tensor<T> flow(2, out_h, out_w);
  for (int py = 0; py < out_h; ++py)
    for (int px = 0; px < out_w; ++px) {
      const T cx = T(px) / T(stride), cy = T(py) / T(stride);
      const BilinearTap<T> tap(cx, cy, w, h);
      const int xs[2] = {tap.x0, tap.x1}, ys[2] = {tap.y0, tap.y1};
      const T wx[2] = {T(1) - tap.ax, tap.ax}, wy[2] = {T(1) - tap.ay, tap.ay};
      T fx = 0, fy = 0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const int jx = xs[b], jy = ys[a];
          const T wt = wy[a] * wx[b];
          const T rx = cx - T(jx), ry = cy - T(jy);
          const T px_ = affine.at(field::fx, jy, jx) + (affine.at(field::a00, jy, jx) - T(1)) * rx +
                        affine.at(field::a01, jy, jx) * ry;
          const T py_ = affine.at(field::fy, jy, jx) + affine.at(field::a10, jy, jx) * rx +
                        (affine.at(field::a11, jy, jx) - T(1)) * ry;
          fx += wt * px_;
          fy += wt * py_;
        }
      flow.at(0, py, px) = fx * T(stride);
      flow.at(1, py, px) = fy * T(stride);
    }
  return flow;
}

}  // namespace samnet
