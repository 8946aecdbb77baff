#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "samnet/ops.hpp"

namespace samnet {

using Rng = std::mt19937_64;

template <class T>
struct ConvLayer {
  Parameter<T> weight;
  Parameter<T> bias;
  int stride = 1;
  int pad = 1;

  ConvLayer() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  ConvLayer(const std::string& name, int in, int out, int k, int stride_, Rng& rng, bool zero = false)
      : weight(name + ".weight", Tensor<T>(std::vector<int>{out, in, k, k})),
        bias(name + ".bias", Tensor<T>(std::vector<int>{out})),
        stride(stride_),
        pad(k / 2) {
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : weight.value.vec()) v = static_cast<T>(u(rng));
      for (auto& v : bias.value.vec()) v = static_cast<T>(u(rng));
    }
  }

  int in_channels() const { return weight.value.dim(1); }
  int out_channels() const { return weight.value.dim(0); }

  // Tracked: gradients accumulate into weight.grad / bias.grad.
  Var operator()(Graph<T>& g, Var x) { return ops::conv2d(g, x, g.param(weight), g.param(bias), stride, pad); }
  // Untracked: weights enter the graph as constants.
  Var operator()(Graph<T>& g, Var x) const {
    return ops::conv2d(g, x, g.input(weight.value), g.input(bias.value), stride, pad);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace samnet
