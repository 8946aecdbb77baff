#pragma once

#include <memory>
#include <vector>

#include "samnet/backbone.hpp"
#include "samnet/matching.hpp"

namespace samnet {

namespace blend_detail {

// Sample offset g_j = (A_j - I)(i - j) + f_j for neighbour j = i + (dx, dy).
template <class T>
inline void offset(const Tensor<T>& A, int jy, int jx, int dx, int dy, T& gx, T& gy) {
  gx = (A.at(field::a00, jy, jx) - T(1)) * T(-dx) + A.at(field::a01, jy, jx) * T(-dy) + A.at(field::fx, jy, jx);
  gy = A.at(field::a10, jy, jx) * T(-dx) + (A.at(field::a11, jy, jx) - T(1)) * T(-dy) + A.at(field::fy, jy, jx);
}

}  // namespace blend_detail

// B_i = (1 - lambda) F_s(i) + lambda * sum_j alpha_j F_t(i + g_j) / sum_j alpha_j over the
// in-bounds neighbours j of the (2r+1)^2 window N_i.
template <class T>
Var blend(Graph<T>& g, Var source, Var target, Var affine, Var conf, T lambda, int radius) {
  const auto& Fs = g.value(source);
  const auto& Ft = g.value(target);
  const auto& A = g.value(affine);
  const auto& alpha = g.value(conf);
  Fs.require_same_shape(Ft, "blend");
  require_field(A.shape(), "blend");
  if (A.height() != Fs.height() || A.width() != Fs.width() || alpha.rank() != 3 || alpha.channels() != 1 ||
      alpha.height() != Fs.height() || alpha.width() != Fs.width())
    throw ShapeError("blend: field/confidence geometry differs from features " + Fs.shape_string());
  if (radius < 0) throw ArgumentError("blend: negative radius");
  for (T a : alpha.vec())
    if (!(a > T(0))) throw ArgumentError("blend: confidence must be strictly positive");
  const int c = Fs.channels(), h = Fs.height(), w = Fs.width();
  Tensor<T> out(c, h, w);
  auto mean = std::make_shared<Tensor<T>>(c, h, w);  // confidence-weighted target mean M_i
  std::vector<T> s(c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T z = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int jy = y + dy, jx = x + dx;
          if (jy < 0 || jy >= h || jx < 0 || jx >= w) continue;
          T gx, gy;
          blend_detail::offset(A, jy, jx, dx, dy, gx, gy);
          const BilinearTap<T> tap(T(x) + gx, T(y) + gy, w, h);
          const T a = alpha.at(0, jy, jx);
          z += a;
          for (int ch = 0; ch < c; ++ch) mean->at(ch, y, x) += a * tap.value(Ft.channel(ch), w);
        }
      for (int ch = 0; ch < c; ++ch) {
        mean->at(ch, y, x) /= z;
        out.at(ch, y, x) = (T(1) - lambda) * Fs.at(ch, y, x) + lambda * mean->at(ch, y, x);
      }
    }
  return g.record(std::move(out), {source, target, affine, conf}, [=](Graph<T>& gr, Var self) {
    const auto& Ftv = gr.value(target);
    const auto& Av = gr.value(affine);
    const auto& av = gr.value(conf);
    const auto& G = gr.grad(self);
    if (gr.requires_grad(source)) {
      auto& gs = gr.grad(source);
      for (std::size_t i = 0; i < G.size(); ++i) gs[i] += (T(1) - lambda) * G[i];
    }
    const bool gt = gr.requires_grad(target), ga = gr.requires_grad(affine), gc = gr.requires_grad(conf);
    if (!(gt || ga || gc) || lambda == T(0)) return;
    Tensor<T>* gFt = gt ? &gr.grad(target) : nullptr;
    Tensor<T>* gA = ga ? &gr.grad(affine) : nullptr;
    Tensor<T>* gC = gc ? &gr.grad(conf) : nullptr;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T z = 0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int jy = y + dy, jx = x + dx;
            if (jy >= 0 && jy < h && jx >= 0 && jx < w) z += av.at(0, jy, jx);
          }
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int jy = y + dy, jx = x + dx;
            if (jy < 0 || jy >= h || jx < 0 || jx >= w) continue;
            T gx, gy;
            blend_detail::offset(Av, jy, jx, dx, dy, gx, gy);
            const BilinearTap<T> tap(T(x) + gx, T(y) + gy, w, h);
            const T a = av.at(0, jy, jx);
            const T wgt = lambda * a / z;
            T dalpha = 0, sx = 0, sy = 0;
            for (int ch = 0; ch < c; ++ch) {
              const T go = G.at(ch, y, x);
              const T* plane = Ftv.channel(ch);
              if (gFt) tap.scatter(gFt->channel(ch), w, wgt * go);
              if (gC) dalpha += go * (tap.value(plane, w) - mean->at(ch, y, x));
              if (gA) {
                sx += wgt * go * tap.dx(plane, w);
                sy += wgt * go * tap.dy(plane, w);
              }
            }
            if (gC) gC->at(0, jy, jx) += lambda * dalpha / z;
            if (gA) {
              gA->at(field::fx, jy, jx) += sx;
              gA->at(field::fy, jy, jx) += sy;
              gA->at(field::a00, jy, jx) += sx * T(-dx);
              gA->at(field::a01, jy, jx) += sx * T(-dy);
              gA->at(field::a10, jy, jx) += sy * T(-dx);
              gA->at(field::a11, jy, jx) += sy * T(-dy);
            }
          }
      }
  });
}

template <class T>
struct StylizeVars {
  Var image;
  Var level_h;              // F^{s<-t,l} at level H: the blended map itself
  std::vector<Var> fused;   // lower-level stylized features, top-down
};

template <class T>
StylizeVars<T> stylize(Graph<T>& g, Var blended, const PyramidVars<T>& skips, const DroplinkMask& mask,
                       BackboneParams<T>& backbone, bool track_params = true) {
  auto dec = decode_with_droplink(g, blended, skips, mask, backbone, track_params);
  return {dec.image, blended, dec.fused};
}

// ---- Tensor-level entry points ----

template <class T>
Tensor<T> blend(const Tensor<T>& source, const Tensor<T>& target, const Tensor<T>& affine, const Tensor<T>& conf,
                T lambda, int radius) {
  Graph<T> g(false);
  return g.value(blend(g, g.input(source), g.input(target), g.input(affine), g.input(conf), lambda, radius));
}

template <class T>
struct Stylized {
  Image image;
  std::vector<Tensor<T>> features;  // level H first, then lower levels top-down
};

template <class T>
Stylized<T> stylize(const Tensor<T>& blended, const std::vector<Tensor<T>>& skips, const DroplinkMask& mask,
                    const BackboneParams<T>& backbone) {
  Graph<T> g(false);
  PyramidVars<T> sv;
  for (const auto& s : skips) sv.levels.push_back(g.input(s));
  auto st = stylize(g, g.input(blended), sv, mask, const_cast<BackboneParams<T>&>(backbone), false);
  Stylized<T> out{tensor_image(g.value(st.image)), {g.value(st.level_h)}};
  for (Var v : st.fused) out.features.push_back(g.value(v));
  return out;
}

}  // namespace samnet
