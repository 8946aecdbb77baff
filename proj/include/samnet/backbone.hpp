#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "samnet/image.hpp"
#include "samnet/nn.hpp"

namespace samnet {

enum class BackboneMode { toy, pretrained };
enum class DroplinkMode { train, test };

inline std::string to_string(BackboneMode m) { return m == BackboneMode::toy ? "toy" : "pretrained"; }
inline BackboneMode parse_backbone_mode(const std::string& s) {
  if (s == "toy") return BackboneMode::toy;
  if (s == "pretrained") return BackboneMode::pretrained;
  throw ArgumentError("unknown backbone mode '" + s + "' (expected toy|pretrained)");
}

// One extractor level: a chain of 3x3 convolutions with ReLU, optionally with a 2x2 max
// pool inserted before conv index `pool_before`. The last conv of the matching level is
// instance-normalized instead of rectified.
template <class T>
struct ExtractorLevel {
  int pool_before = -1;
  std::vector<ConvLayer<T>> convs;
};

// Extractor W_F and mirror decoder W_D. decoder[h] maps level h+2 geometry to level h+1
// (0-based h = 0..H-2, applied from the top down); `output` maps level 1 to RGB.
template <class T>
struct BackboneParams {
  BackboneMode mode = BackboneMode::toy;
  bool frozen = false;  // extractor excluded from training updates
  std::vector<ExtractorLevel<T>> extractor;
  std::vector<ConvLayer<T>> decoder;
  ConvLayer<T> output;

  int levels() const { return static_cast<int>(extractor.size()); }
  int level_channels(int h) const { return extractor.at(h).convs.back().out_channels(); }

  // Smallest height/width accepted: the matching level must be at least 2x2.
  int min_size() const { return std::max(16, 1 << levels()); }

  std::vector<Parameter<T>*> extractor_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : extractor)
      for (auto& c : l.convs) c.collect(out);
    return out;
  }
  std::vector<Parameter<T>*> decoder_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& c : decoder) c.collect(out);
    output.collect(out);
    return out;
  }
  std::vector<Parameter<T>*> parameters() {
    auto out = extractor_parameters();
    for (auto* p : decoder_parameters()) out.push_back(p);
    return out;
  }
};

// Per-level droplink gates b_h for the H-1 decoder fusion points (levels 1..H-1).
struct DroplinkMask {
  std::vector<double> gates;
  int levels() const { return static_cast<int>(gates.size()) + 1; }
};

// Toy extractor: 4 levels, stride 2 between levels, channels 16/32/64/64.
template <class T>
BackboneParams<T> make_toy_backbone(Rng& rng, std::vector<int> channels = {16, 32, 64, 64}) {
  if (channels.size() < 2) throw ArgumentError("toy backbone needs at least 2 levels");
  BackboneParams<T> p;
  p.mode = BackboneMode::toy;
  int in = 3;
  for (std::size_t h = 0; h < channels.size(); ++h) {
    ExtractorLevel<T> level;
    level.convs.emplace_back("extractor.l" + std::to_string(h + 1), in, channels[h], 3, h == 0 ? 1 : 2, rng);
    p.extractor.push_back(std::move(level));
    in = channels[h];
  }
  for (int h = static_cast<int>(channels.size()) - 2; h >= 0; --h)
    p.decoder.emplace_back("decoder.l" + std::to_string(h + 1), channels[h + 1], channels[h], 3, 1, rng);
  p.output = ConvLayer<T>("decoder.out", channels[0], 3, 3, 1, rng);
  return p;
}

// VGG-19 layout up to relu4_1 (levels at relu1_1, relu2_1, relu3_1, relu4_1). Weights are
// expected to be loaded from a checkpoint; the random initialization only fixes shapes.
template <class T>
BackboneParams<T> make_vgg19_backbone(Rng& rng) {
  BackboneParams<T> p;
  p.mode = BackboneMode::pretrained;
  p.frozen = true;
  auto level = [&](int pool_before, std::vector<std::pair<std::string, std::pair<int, int>>> convs) {
    ExtractorLevel<T> l;
    l.pool_before = pool_before;
    for (auto& [name, io] : convs) l.convs.emplace_back("extractor." + name, io.first, io.second, 3, 1, rng);
    p.extractor.push_back(std::move(l));
  };
  level(-1, {{"conv1_1", {3, 64}}});
  level(1, {{"conv1_2", {64, 64}}, {"conv2_1", {64, 128}}});
  level(1, {{"conv2_2", {128, 128}}, {"conv3_1", {128, 256}}});
  level(3, {{"conv3_2", {256, 256}}, {"conv3_3", {256, 256}}, {"conv3_4", {256, 256}}, {"conv4_1", {256, 512}}});
  const std::vector<int> ch{64, 128, 256, 512};
  for (int h = 2; h >= 0; --h)
    p.decoder.emplace_back("decoder.l" + std::to_string(h + 1), ch[h + 1], ch[h], 3, 1, rng);
  p.output = ConvLayer<T>("decoder.out", 64, 3, 3, 1, rng);
  return p;
}

template <class T>
struct PyramidVars {
  std::vector<Var> levels;  // h = 1..H (index 0..H-1)
  Var top() const { return levels.back(); }
};

namespace backbone_detail {

template <class T, class Layer>
Var run_conv(Graph<T>& g, Layer& layer, Var x, bool track) {
  if (track) return layer(g, x);
  return static_cast<const Layer&>(layer)(g, x);
}

}  // namespace backbone_detail

// Shared (siamese) feature extraction. Gradients reach the extractor weights only when
// `track_params` is set.
template <class T>
PyramidVars<T> extract_features(Graph<T>& g, Var image, BackboneParams<T>& params, bool track_params) {
  const auto& img = g.value(image);
  if (img.rank() != 3 || img.channels() != 3) throw ShapeError("extract_features: expected a 3-channel image");
  if (img.height() < params.min_size() || img.width() < params.min_size())
    throw SizeError("extract_features: image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                    " smaller than the minimum " + std::to_string(params.min_size()) + " for " +
                    std::to_string(params.levels()) + " levels");
  PyramidVars<T> out;
  Var x = image;
  const int top = params.levels() - 1;
  for (int h = 0; h <= top; ++h) {
    auto& level = params.extractor[h];
    for (int k = 0; k < static_cast<int>(level.convs.size()); ++k) {
      if (k == level.pool_before) x = ops::maxpool2(g, x);
      x = backbone_detail::run_conv(g, level.convs[k], x, track_params);
      const bool last = k + 1 == static_cast<int>(level.convs.size());
      if (!(last && h == top)) x = ops::relu(g, x);
    }
    out.levels.push_back(x);
  }
  out.levels.back() = ops::instance_norm(g, out.levels.back());
  return out;
}

inline DroplinkMask sample_droplink_mask(double probability, int levels, std::uint64_t seed, DroplinkMode mode) {
  if (!(probability >= 0.0 && probability <= 1.0)) throw ArgumentError("droplink probability must lie in [0, 1]");
  if (levels < 2) throw ArgumentError("droplink mask needs at least 2 levels");
  DroplinkMask m{std::vector<double>(levels - 1)};
  if (mode == DroplinkMode::test) {
    for (auto& b : m.gates) b = 0.5;
    return m;
  }
  Rng rng(seed);
  std::bernoulli_distribution bern(probability);
  for (auto& b : m.gates) b = bern(rng) ? 1.0 : 0.0;
  return m;
}

template <class T>
struct DecodeVars {
  Var image;
  std::vector<Var> fused;  // F^{s<-t}_h for h = H-1 .. 1 (top-down order)
};

// Decoder with droplink fusion: F_h = (1 - b_h) dec_h(.) + b_h F^s_h, then RGB clamped to [0,1].
template <class T>
DecodeVars<T> decode_with_droplink(Graph<T>& g, Var blended, const PyramidVars<T>& skips, const DroplinkMask& mask,
                                   BackboneParams<T>& params, bool track_params = true) {
  const int levels = params.levels();
  if (static_cast<int>(skips.levels.size()) != levels || mask.levels() != levels ||
      static_cast<int>(params.decoder.size()) != levels - 1)
    throw ShapeError("decode_with_droplink: level counts disagree (mask " + std::to_string(mask.levels()) + ", skips " +
                     std::to_string(skips.levels.size()) + ", params " + std::to_string(levels) + ")");
  const auto& top = g.value(skips.top());
  if (!g.value(blended).same_shape(top)) throw ShapeError("decode_with_droplink: blended map must match level-H geometry");
  DecodeVars<T> out;
  Var x = blended;
  for (int k = 0; k < levels - 1; ++k) {
    const int h = levels - 2 - k;  // 0-based target level
    const auto& skip = g.value(skips.levels[h]);
    x = ops::upsample_nearest(g, x, skip.height(), skip.width());
    x = ops::relu(g, backbone_detail::run_conv(g, params.decoder[k], x, track_params));
    x = ops::mix(g, x, skips.levels[h], static_cast<T>(mask.gates[h]));
    out.fused.push_back(x);
  }
  out.image = ops::clamp01(g, backbone_detail::run_conv(g, params.output, x, track_params));
  return out;
}

// ---- Tensor-level entry points ----

template <class T>
std::vector<Tensor<T>> extract_features(const Image& image, const BackboneParams<T>& params) {
  Graph<T> g(false);
  auto& mp = const_cast<BackboneParams<T>&>(params);  // untracked path never writes
  auto pyr = extract_features(g, g.input(image_tensor<T>(image)), mp, false);
  std::vector<Tensor<T>> out;
  for (Var v : pyr.levels) out.push_back(g.value(v));
  return out;
}

template <class T>
Image decode_with_droplink(const Tensor<T>& blended, const std::vector<Tensor<T>>& skips, const DroplinkMask& mask,
                           const BackboneParams<T>& params) {
  Graph<T> g(false);
  PyramidVars<T> sv;
  for (const auto& s : skips) sv.levels.push_back(g.input(s));
  auto& mp = const_cast<BackboneParams<T>&>(params);
  auto dec = decode_with_droplink(g, g.input(blended), sv, mask, mp, false);
  return tensor_image(g.value(dec.image));
}

}  // namespace samnet
