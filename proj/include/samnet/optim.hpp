#pragma once

#include <cmath>
#include <vector>

#include "samnet/autograd.hpp"

namespace samnet {

template <class T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Parameter<T>*> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (auto* p : params_) {
      m_.push_back(Tensor<T>::zeros_like(p->value));
      v_.push_back(Tensor<T>::zeros_like(p->value));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  // Applies one update using grad / scale.
  void step(double scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_), c2 = 1.0 - std::pow(opt_.beta2, t_);
    const double inv = 1.0 / scale;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& val = params_[k]->value;
      const auto& g = params_[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = g[i] * inv;
        m[i] = static_cast<T>(opt_.beta1 * m[i] + (1 - opt_.beta1) * gi);
        v[i] = static_cast<T>(opt_.beta2 * v[i] + (1 - opt_.beta2) * gi * gi);
        val[i] -= static_cast<T>(opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps));
      }
    }
  }

  long steps() const noexcept { return t_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }
  void restore(long t, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("Adam::restore: moment count mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::vector<Parameter<T>*> params_;
  Options opt_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace samnet
