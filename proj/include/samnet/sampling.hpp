#pragma once

#include <algorithm>
#include <cmath>

#include "samnet/tensor.hpp"

namespace samnet {

// Bilinear tap set for one sample position with border clamping. Positions outside the
// grid are clamped first; the clamped coordinate then has zero derivative.
template <class T>
struct BilinearTap {
  int x0, x1, y0, y1;
  T ax, ay;
  bool inside_x, inside_y;

  BilinearTap(T x, T y, int w, int h) {
    const T cx = std::clamp(x, T(0), T(w - 1));
    const T cy = std::clamp(y, T(0), T(h - 1));
    inside_x = x > T(0) && x < T(w - 1);
    inside_y = y > T(0) && y < T(h - 1);
    x0 = std::min(static_cast<int>(std::floor(cx)), w - 1);
    y0 = std::min(static_cast<int>(std::floor(cy)), h - 1);
    x1 = std::min(x0 + 1, w - 1);
    y1 = std::min(y0 + 1, h - 1);
    ax = cx - T(x0);
    ay = cy - T(y0);
  }

  T value(const T* plane, int w) const {
    return (T(1) - ay) * ((T(1) - ax) * plane[y0 * w + x0] + ax * plane[y0 * w + x1]) +
           ay * ((T(1) - ax) * plane[y1 * w + x0] + ax * plane[y1 * w + x1]);
  }

  // d value / d x and d value / d y (zero along clamped axes).
  T dx(const T* plane, int w) const {
    if (!inside_x) return T(0);
    return (T(1) - ay) * (plane[y0 * w + x1] - plane[y0 * w + x0]) + ay * (plane[y1 * w + x1] - plane[y1 * w + x0]);
  }
  T dy(const T* plane, int w) const {
    if (!inside_y) return T(0);
    return (T(1) - ax) * (plane[y1 * w + x0] - plane[y0 * w + x0]) + ax * (plane[y1 * w + x1] - plane[y0 * w + x1]);
  }

  // Scatter g into the four taps (adjoint of value()).
  void scatter(T* plane, int w, T g) const {
    plane[y0 * w + x0] += g * (T(1) - ay) * (T(1) - ax);
    plane[y0 * w + x1] += g * (T(1) - ay) * ax;
    plane[y1 * w + x0] += g * ay * (T(1) - ax);
    plane[y1 * w + x1] += g * ay * ax;
  }
};

// Samples every channel of a (C,H,W) map at (x, y).
template <class T>
void sample_channels(const Tensor<T>& map, T x, T y, T* out) {
  const BilinearTap<T> tap(x, y, map.width(), map.height());
  for (int c = 0; c < map.channels(); ++c) out[c] = tap.value(map.channel(c), map.width());
}

}  // namespace samnet
