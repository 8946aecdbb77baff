#pragma once

#include <optional>

#include "samnet/eval.hpp"
#include "samnet/pipeline.hpp"

namespace samnet {

// Bilinear resize with pixel-centre alignment.
inline Tensor<float> resize_bilinear(const Tensor<float>& src, int out_h, int out_w) {
  if (src.height() == out_h && src.width() == out_w) return src;
  Tensor<float> out(src.channels(), out_h, out_w);
  const double sy = double(src.height()) / out_h, sx = double(src.width()) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const BilinearTap<double> tap((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, src.width(), src.height());
      for (int c = 0; c < src.channels(); ++c) {
        const float* p = src.channel(c);
        const int w = src.width();
        out.at(c, y, x) = static_cast<float>(
            (1 - tap.ay) * ((1 - tap.ax) * p[tap.y0 * w + tap.x0] + tap.ax * p[tap.y0 * w + tap.x1]) +
            tap.ay * ((1 - tap.ax) * p[tap.y1 * w + tap.x0] + tap.ax * p[tap.y1 * w + tap.x1]));
      }
    }
  return out;
}

// Backward warp: out(p) = image(p + flow(p)), bilinear with border clamping. With the
// source-to-target flow this aligns the target to the source frame.
inline Image warp_image(const Image& image, const Tensor<float>& flow) {
  require_flow(flow, "warp_image");
  Image out(image.channels(), flow.height(), flow.width());
  std::vector<float> px(image.channels());
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      sample_channels(image, x + flow.at(0, y, x), y + flow.at(1, y, x), px.data());
      for (int c = 0; c < image.channels(); ++c) out.at(c, y, x) = px[c];
    }
  return out;
}

struct Prediction {
  Tensor<float> flow;        // (2, Hs, Ws) in source pixels
  Tensor<float> confidence;  // (1, h, w) at the matching level, final iteration
  IterationTrace trace;      // at the working resolution
};

// Runs the recurrent matcher at `work_size` x `work_size` (both images resized) and maps
// the final iteration's flow back to the native source grid and target pixel units.
template <class T>
Prediction predict(const Image& source, const Image& target, Model<T>& model, const PipelineConfig& cfg,
                   std::optional<int> iterations = std::nullopt, int work_size = 0) {
  require_image(source, "predict");
  require_image(target, "predict");
  const int S = work_size > 0 ? work_size : cfg.image_size;
  const Image s = resize_bilinear(source, S, S), t = resize_bilinear(target, S, S);
  Prediction out;
  out.trace = run(s, t, model, cfg, RunMode::test, iterations.value_or(cfg.iters_test));
  const auto& field = out.trace.fields.back();
  const int stride = S / field.height();
  const Tensor<float> wf = upsample_flow(field, stride, S, S);
  const int hs = source.height(), ws = source.width();
  const double kx = double(S) / ws, ky = double(S) / hs;
  const double tx = double(target.width()) / S, ty = double(target.height()) / S;
  out.flow = Tensor<float>(2, hs, ws);
  float f[2];
  for (int y = 0; y < hs; ++y)
    for (int x = 0; x < ws; ++x) {
      const double wx = (x + 0.5) * kx - 0.5, wy = (y + 0.5) * ky - 0.5;
      sample_channels(wf, static_cast<float>(wx), static_cast<float>(wy), f);
      out.flow.at(0, y, x) = static_cast<float>(((wx + f[0]) + 0.5) * tx - 0.5 - x);
      out.flow.at(1, y, x) = static_cast<float>(((wy + f[1]) + 0.5) * ty - 0.5 - y);
    }
  out.confidence = out.trace.confidence.back();
  return out;
}

}  // namespace samnet
