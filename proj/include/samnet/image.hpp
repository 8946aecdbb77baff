#pragma once

#include <algorithm>
#include <cmath>

#include "samnet/tensor.hpp"

namespace samnet {

// RGB image, (3, H, W) float in [0, 1].
using Image = Tensor<float>;

template <class T>
Tensor<T> image_tensor(const Image& img) {
  return img.template cast<T>();
}

template <class T>
Image tensor_image(const Tensor<T>& t) {
  return t.template cast<float>();
}

inline void require_image(const Image& img, const char* what) {
  if (img.rank() != 3 || img.channels() != 3)
    throw ShapeError(std::string(what) + ": expected (3,H,W) image, got " + img.shape_string());
}

// Binary mask stored as (1, H, W) with values 0 or 1.
using Mask = Tensor<float>;

inline double psnr(const Image& a, const Image& b) {
  a.require_same_shape(b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace samnet
