#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "samnet/data.hpp"
#include "samnet/sampling.hpp"

namespace samnet {

inline void require_flow(const Tensor<float>& f, const char* where) {
  if (f.rank() != 3 || f.channels() != 2) throw ShapeError(std::string(where) + ": flow must be (2, H, W)");
}

// Fraction of keypoints whose flow-warped source position lies within alpha * reference
// of the target keypoint. reference <= 0 selects max(source height, width).
inline double pck(const Tensor<float>& flow, const KeypointPair& kp, double alpha, double reference = 0) {
  require_flow(flow, "pck");
  if (kp.points.empty()) throw MetricError("pck: empty keypoint list");
  if (reference <= 0) reference = std::max(kp.source_height, kp.source_width);
  const double thr = alpha * reference;
  int hits = 0;
  for (const auto& k : kp.points) {
    const BilinearTap<double> tap(k.x_src, k.y_src, flow.width(), flow.height());
    auto sample = [&](int c) {
      const float* p = flow.channel(c);
      const int w = flow.width();
      return (1 - tap.ay) * ((1 - tap.ax) * p[tap.y0 * w + tap.x0] + tap.ax * p[tap.y0 * w + tap.x1]) +
             tap.ay * ((1 - tap.ax) * p[tap.y1 * w + tap.x0] + tap.ax * p[tap.y1 * w + tap.x1]);
    };
    const double dx = k.x_src + sample(0) - k.x_tgt, dy = k.y_src + sample(1) - k.y_tgt;
    if (std::sqrt(dx * dx + dy * dy) <= thr) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(kp.points.size());
}

inline double endpoint_error(const Tensor<float>& pred, const Tensor<float>& gt, const Mask& mask) {
  require_flow(pred, "endpoint_error");
  pred.require_same_shape(gt, "endpoint_error");
  double s = 0;
  long n = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (mask.at(0, y, x) <= 0.5f) continue;
      const double dx = double(pred.at(0, y, x)) - gt.at(0, y, x), dy = double(pred.at(1, y, x)) - gt.at(1, y, x);
      s += std::sqrt(dx * dx + dy * dy);
      ++n;
    }
  if (n == 0) throw MetricError("endpoint_error: empty mask");
  return s / static_cast<double>(n);
}

// Fraction of valid pixels whose endpoint error is below threshold_px.
inline double flow_accuracy(const Tensor<float>& pred, const Tensor<float>& gt, const Mask& mask, double threshold_px) {
  require_flow(pred, "flow_accuracy");
  pred.require_same_shape(gt, "flow_accuracy");
  long hit = 0, n = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (mask.at(0, y, x) <= 0.5f) continue;
      const double dx = double(pred.at(0, y, x)) - gt.at(0, y, x), dy = double(pred.at(1, y, x)) - gt.at(1, y, x);
      if (std::sqrt(dx * dx + dy * dy) < threshold_px) ++hit;
      ++n;
    }
  if (n == 0) throw MetricError("flow_accuracy: empty mask");
  return static_cast<double>(hit) / static_cast<double>(n);
}

// Source mask splatted to p + flow(p) (nearest pixel), then IoU with the target mask.
inline Mask warp_mask(const Tensor<float>& flow, const Mask& source_mask, int target_h, int target_w) {
  require_flow(flow, "warp_mask");
  Mask out(1, target_h, target_w);
  for (int y = 0; y < source_mask.height(); ++y)
    for (int x = 0; x < source_mask.width(); ++x) {
      if (source_mask.at(0, y, x) <= 0.5f) continue;
      const int tx = static_cast<int>(std::lround(x + flow.at(0, y, x)));
      const int ty = static_cast<int>(std::lround(y + flow.at(1, y, x)));
      if (tx >= 0 && tx < target_w && ty >= 0 && ty < target_h) out.at(0, ty, tx) = 1.0f;
    }
  return out;
}

inline double mask_iou(const Mask& a, const Mask& b) {
  a.require_same_shape(b, "mask_iou");
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0.5f, y = b[i] > 0.5f;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double mask_transfer_iou(const Tensor<float>& flow, const Mask& source_mask, const Mask& target_mask) {
  if (flow.height() != source_mask.height() || flow.width() != source_mask.width())
    throw ShapeError("mask_transfer_iou: flow and source mask sizes differ");
  return mask_iou(warp_mask(flow, source_mask, target_mask.height(), target_mask.width()), target_mask);
}

// ---- Reports ----

struct MetricValue {
  std::string metric;
  double threshold = 0;  // NaN when the metric has none
  double value = 0;
};

struct PairMetrics {
  std::string pair;
  std::vector<MetricValue> values;
};

class EvalReport {
 public:
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<PairMetrics> pairs;

  void add(const std::string& pair, const std::string& metric, double threshold, double value) {
    auto it = std::find_if(pairs.begin(), pairs.end(), [&](const PairMetrics& p) { return p.pair == pair; });
    if (it == pairs.end()) {
      pairs.push_back({pair, {}});
      it = pairs.end() - 1;
    }
    it->values.push_back({metric, threshold, value});
  }

  // Mean per (metric, threshold) across the pairs that report it.
  std::vector<MetricValue> aggregate() const {
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
    std::map<std::pair<std::string, std::string>, MetricValue> keys;
    for (const auto& p : pairs)
      for (const auto& v : p.values) {
        const auto key = std::make_pair(v.metric, threshold_text(v.threshold));
        acc[key].first += v.value;
        acc[key].second += 1;
        keys[key] = v;
      }
    std::vector<MetricValue> out;
    for (const auto& [key, s] : acc) out.push_back({key.first, keys[key].threshold, s.first / s.second});
    return out;
  }

  double aggregate_value(const std::string& metric) const {
    for (const auto& v : aggregate())
      if (v.metric == metric) return v.value;
    throw MetricError("report has no metric '" + metric + "'");
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "pair,metric,threshold,value\n";
    for (const auto& p : pairs)
      for (const auto& v : p.values) os << p.pair << "," << v.metric << "," << threshold_text(v.threshold) << "," << format_double(v.value) << "\n";
    for (const auto& v : aggregate()) os << "mean," << v.metric << "," << threshold_text(v.threshold) << "," << format_double(v.value) << "\n";
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config_fingerprint"] = fingerprint;
    j["seed"] = seed;
    auto entry = [](const MetricValue& v) {
      nlohmann::json e{{"metric", v.metric}, {"value", v.value}};
      e["threshold"] = std::isnan(v.threshold) ? nlohmann::json(nullptr) : nlohmann::json(v.threshold);
      return e;
    };
    j["pairs"] = nlohmann::json::array();
    for (const auto& p : pairs) {
      nlohmann::json pj{{"pair", p.pair}, {"metrics", nlohmann::json::array()}};
      for (const auto& v : p.values) pj["metrics"].push_back(entry(v));
      j["pairs"].push_back(pj);
    }
    j["aggregate"] = nlohmann::json::array();
    for (const auto& v : aggregate()) j["aggregate"].push_back(entry(v));
    return j;
  }

 private:
  static std::string threshold_text(double t) { return std::isnan(t) ? "" : format_double(t); }
};

// ---- SVG line plots ----

struct Series {
  std::string label;
  std::vector<double> x, y;
};

inline std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::vector<Series>& series) {
  const double W = 640, H = 400, ml = 60, mr = 20, mt = 40, mb = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(std::round(yv * 1000) / 1000) << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << format_double(std::round(xv * 100) / 100) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      if (std::isfinite(series[s].y[i])) os << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
    os << "\"/>\n<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 14 * (s + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << col << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace samnet
