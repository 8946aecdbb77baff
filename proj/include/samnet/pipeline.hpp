#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "samnet/blending.hpp"
#include "samnet/checkpoint.hpp"
#include "samnet/config.hpp"
#include "samnet/losses.hpp"
#include "samnet/matching.hpp"
#include "samnet/optim.hpp"

namespace samnet {

enum class RunMode { train, test };

template <class T>
struct Model {
  BackboneParams<T> backbone;
  MatcherParams<T> matcher;

  static Model create(const PipelineConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Model m;
    m.backbone = cfg.backbone == BackboneMode::toy ? make_toy_backbone<T>(rng) : make_vgg19_backbone<T>(rng);
    const int win = 2 * cfg.p_radius + 1;
    m.matcher = MatcherParams<T>(win * win, rng);
    return m;
  }

  std::vector<Parameter<T>*> parameters() {
    auto out = backbone.parameters();
    for (auto* p : matcher.parameters()) out.push_back(p);
    return out;
  }
  std::vector<Parameter<T>*> trainable(bool freeze_extractor) {
    auto out = freeze_extractor ? backbone.decoder_parameters() : backbone.parameters();
    for (auto* p : matcher.parameters()) out.push_back(p);
    return out;
  }

  Checkpoint to_checkpoint() {
    Checkpoint ck;
    ck.put_all(parameters());
    ck.put_scalar("meta.backbone_mode", backbone.mode == BackboneMode::toy ? 0 : 1);
    ck.put_scalar("meta.window", matcher.window_size);
    return ck;
  }
  void load(const Checkpoint& ck) {
    if (ck.has("meta.window") && static_cast<int>(ck.scalar("meta.window")) != matcher.window_size)
      throw ShapeError("checkpoint matcher window " + std::to_string(static_cast<int>(ck.scalar("meta.window"))) +
                       " differs from the configured " + std::to_string(matcher.window_size));
    ck.load_into(parameters());
  }
  // Extractor weights only (pretrained mode).
  void load_extractor(const Checkpoint& ck) { ck.load_into(backbone.extractor_parameters()); }
};

// Graph handles of one recurrent run.
struct GraphTrace {
  std::vector<Var> fields;      // T^l
  std::vector<Var> confidence;  // alpha^l
  std::vector<Var> stylized;    // I^{s<-t,l} for the decoded iterations
  Var source_top, stylized_top, warped_top;
};

enum class Decode { none, last, every };

// Recurrent loop on precomputed (or tracked) pyramids.
template <class T>
GraphTrace run_graph(Graph<T>& g, const PyramidVars<T>& src, const PyramidVars<T>& tgt, Model<T>& model,
                     const PipelineConfig& cfg, int iterations, const DroplinkMask& mask, Decode decode,
                     bool track_decoder) {
  GraphTrace tr;
  const Var Fs = src.top(), Ft = tgt.top();
  const auto& fsv = g.value(Fs);
  Var field = g.input(identity_field<T>(fsv.height(), fsv.width()));
  Var styl = Fs, warped = Ft;
  for (int l = 1; l <= iterations; ++l) {
    try {
      const T lam = static_cast<T>(cfg.lambda_for(l));
      Var C = blended_correlation(g, Fs, styl, warped, lam, cfg.p_radius);
      Var dT = predict_residual(g, C, model.matcher);
      field = accumulate_step(g, field, dT);
      warped = warp_target(g, Ft, field);
      Var alpha = confidence(g, C, cfg.p_radius);
      Var B = blend(g, Fs, Ft, field, alpha, lam, cfg.n_radius);
      styl = B;
      tr.fields.push_back(field);
      tr.confidence.push_back(alpha);
      if (decode == Decode::every || (decode == Decode::last && l == iterations))
        tr.stylized.push_back(stylize(g, B, src, mask, model.backbone, track_decoder).image);
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(l) + ": " + e.what());
    }
  }
  tr.source_top = Fs;
  tr.stylized_top = styl;
  tr.warped_top = warped;
  return tr;
}

struct IterationTrace {
  std::vector<Tensor<float>> fields;      // T^l, (6, h, w) level units
  std::vector<Image> stylized;            // I^{s<-t,l}
  std::vector<Tensor<float>> confidence;  // alpha^l, (1, h, w)
  std::size_t size() const noexcept { return fields.size(); }
};

// Test-mode run (b_h = test_gate) or a train-mode forward with sampled droplink gates.
template <class T>
IterationTrace run(const Image& source, const Image& target, Model<T>& model, const PipelineConfig& cfg, RunMode mode,
                   std::optional<int> iterations = std::nullopt, std::uint64_t mask_seed = 0) {
  require_image(source, "run");
  require_image(target, "run");
  if (source.height() != target.height() || source.width() != target.width())
    throw ShapeError("run: source and target must share a size");
  Graph<T> g(false);
  auto ps = extract_features(g, g.input(image_tensor<T>(source)), model.backbone, false);
  auto pt = extract_features(g, g.input(image_tensor<T>(target)), model.backbone, false);
  DroplinkMask mask = mode == RunMode::test
                          ? DroplinkMask{std::vector<double>(model.backbone.levels() - 1, cfg.test_gate)}
                          : sample_droplink_mask(cfg.droplink_probability, model.backbone.levels(), mask_seed,
                                                 DroplinkMode::train);
  const int L = iterations.value_or(cfg.iterations(mode == RunMode::train));
  auto tr = run_graph(g, ps, pt, model, cfg, L, mask, Decode::every, false);
  IterationTrace out;
  for (int l = 0; l < L; ++l) {
    out.fields.push_back(g.value(tr.fields[l]).template cast<float>());
    out.stylized.push_back(tensor_image(g.value(tr.stylized[l])));
    out.confidence.push_back(g.value(tr.confidence[l]).template cast<float>());
  }
  return out;
}

// Stride between image pixels and level-H cells.
template <class T>
int matching_stride(const BackboneParams<T>& bb, int image_size) {
  Graph<T> g(false);
  auto p = extract_features(g, g.input(Tensor<T>(3, image_size, image_size)), const_cast<BackboneParams<T>&>(bb), false);
  return image_size / g.value(p.top()).height();
}

// ---- Training ----

struct TrainSample {
  Image source, target;
  Tensor<float> flow;  // evaluation only
  Mask valid;          // evaluation only
  KeypointPair keypoints;  // evaluation only, 16 points following the flow
};

// Stage-1 pairs: synthetic warps of single generated scenes; stage 2 additionally perturbs
// the target photometrically.
inline std::vector<TrainSample> make_samples(const PipelineConfig& cfg, int count, std::uint64_t seed, bool perturb) {
  std::vector<TrainSample> out;
  out.reserve(count);
  SceneConfig sc{cfg.image_size, cfg.image_size};
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000003ull + static_cast<std::uint64_t>(i) * 7919ull;
    Image img = generate_scene(sc, s);
    SyntheticPair p = generate_synthetic_pair(img, cfg.family, cfg.magnitude, s + 1);
    if (perturb) p.target = photometric_perturb(p.target, cfg.perturb_strength, s + 2);
    KeypointPair kp = synthetic_keypoints(p, 16, s + 3);
    out.push_back({std::move(p.source), std::move(p.target), std::move(p.flow), std::move(p.valid), std::move(kp)});
  }
  return out;
}

struct EpochLog {
  int stage = 1;
  int epoch = 0;
  LossTerms loss;  // per-pair means
  double val_epe = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::string last_checkpoint;
};

template <class T>
struct TotalLoss {
  Var total;
  LossTerms terms;
  GraphTrace trace;
};

// Per-pair objective on given pyramids: the matching term, w_C L_C, w_R times the
// smoothness of the final stylized image, and w_recon times the droplink autoencoder error.
template <class T>
TotalLoss<T> total_loss(Graph<T>& g, const PyramidVars<T>& ps, const PyramidVars<T>& pt, Var source_image,
                        Model<T>& model, const PipelineConfig& cfg, std::uint64_t mask_seed) {
  const int levels = model.backbone.levels();
  const DroplinkMask mask = sample_droplink_mask(cfg.droplink_probability, levels, mask_seed, DroplinkMode::train);
  TotalLoss<T> out;
  out.trace = run_graph(g, ps, pt, model, cfg, cfg.iters_train, mask, Decode::last, true);
  const auto& tr = out.trace;
  Var lm = attribute_matching_loss(g, tr.stylized_top, tr.warped_top, cfg.loss);
  Var lc = content_loss(g, tr.stylized_top, tr.source_top);
  Var lr = smoothness_loss(g, tr.stylized.back());
  std::vector<std::pair<Var, T>> parts{{lm, T(1)}, {lc, T(cfg.loss.w_content)}, {lr, T(cfg.loss.w_smooth)}};
  out.terms.matching = g.value(lm)[0];
  out.terms.content = g.value(lc)[0];
  out.terms.smooth = g.value(lr)[0];
  if (cfg.loss.w_recon > 0) {
    const DroplinkMask m2 = sample_droplink_mask(cfg.droplink_probability, levels, mask_seed ^ 0x9e3779b97f4a7c15ull,
                                                 DroplinkMode::train);
    auto rec = decode_with_droplink(g, ps.top(), ps, m2, model.backbone, true);
    Var lrec = squared_error(g, rec.image, source_image);
    parts.push_back({lrec, T(cfg.loss.w_recon)});
    out.terms.recon = g.value(lrec)[0];
  }
  out.total = ops::weighted_sum(g, parts);
  out.terms.total = g.value(out.total)[0];
  return out;
}

// Sum of the per-pair objective into the parameter gradients; the loss path reads only
// images and features.
template <class T>
LossTerms accumulate_pair_gradient(const Image& source, const Image& target, Model<T>& model, const PipelineConfig& cfg,
                                   std::uint64_t mask_seed, const std::vector<Tensor<T>>* cached_src = nullptr,
                                   const std::vector<Tensor<T>>* cached_tgt = nullptr) {
  Graph<T> g(true);
  const bool track_extractor = !cfg.freeze_extractor;
  PyramidVars<T> ps, pt;
  if (cached_src && cached_tgt && !track_extractor) {
    for (const auto& t : *cached_src) ps.levels.push_back(g.input(t));
    for (const auto& t : *cached_tgt) pt.levels.push_back(g.input(t));
  } else {
    ps = extract_features(g, g.input(image_tensor<T>(source)), model.backbone, track_extractor);
    pt = extract_features(g, g.input(image_tensor<T>(target)), model.backbone, track_extractor);
  }
  auto tl = total_loss(g, ps, pt, g.input(image_tensor<T>(source)), model, cfg, mask_seed);
  if (std::isfinite(tl.terms.total)) g.backward(tl.total);
  return tl.terms;
}

// Mean endpoint error in pixels over the valid mask of every sample at iteration `iters`.
template <class T>
std::vector<std::vector<double>> evaluate_epe(const std::vector<TrainSample>& samples, Model<T>& model,
                                              const PipelineConfig& cfg, int iters);

template <class T>
class Trainer {
 public:
  using Callback = std::function<void(const EpochLog&)>;

  Trainer(Model<T>& model, PipelineConfig cfg, fs::path out_dir) : model_(model), cfg_(std::move(cfg)), out_(std::move(out_dir)) {
    cfg_.validate();
  }

  void on_epoch(Callback cb) { callback_ = std::move(cb); }

  TrainResult train(const std::vector<TrainSample>& stage1, const std::vector<TrainSample>& stage2,
                    const std::vector<TrainSample>& val) {
    auto params = model_.trainable(cfg_.freeze_extractor);
    Adam<T> opt(params, {cfg_.lr});
    std::mt19937_64 rng(cfg_.seed * 7777ull + 1);
    TrainResult res;
    if (!out_.empty()) {
      fs::create_directories(out_);
      write_text(out_ / "config.txt", config_text(cfg_));
      std::ofstream csv(out_ / "metrics.csv");
      csv << "stage,epoch,total,matching,content,smooth,recon,val_epe,seconds\n";
    }
    save_checkpoint(res);
    for (int stage = 1; stage <= 2; ++stage) {
      const auto& data = stage == 1 ? stage1 : stage2;
      const int epochs = stage == 1 ? cfg_.epochs : cfg_.stage2_epochs;
      if (epochs == 0 || data.empty()) continue;
      const auto cache = cfg_.freeze_extractor ? pyramids(data) : std::vector<std::pair<PyrT, PyrT>>{};
      std::vector<int> order(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      for (int ep = 0; ep < epochs; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog log{stage, ep, {}, 0, 0};
        for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
          opt.zero_grad();
          const std::size_t end = std::min(order.size(), b + cfg_.batch);
          for (std::size_t k = b; k < end; ++k) {
            const int i = order[k];
            const std::uint64_t mseed = rng();
            const LossTerms lt = cache.empty() ? accumulate_pair_gradient(data[i].source, data[i].target, model_, cfg_, mseed)
                                               : accumulate_pair_gradient(data[i].source, data[i].target, model_, cfg_,
                                                                          mseed, &cache[i].first, &cache[i].second);
            if (!std::isfinite(lt.total)) diverged(res, stage, ep);
            log.loss.total += lt.total;
            log.loss.matching += lt.matching;
            log.loss.content += lt.content;
            log.loss.smooth += lt.smooth;
            log.loss.recon += lt.recon;
          }
          for (auto* p : params)
            if (!p->grad.all_finite()) diverged(res, stage, ep);
          opt.step(static_cast<double>(end - b));
        }
        const double n = static_cast<double>(data.size());
        log.loss.total /= n;
        log.loss.matching /= n;
        log.loss.content /= n;
        log.loss.smooth /= n;
        log.loss.recon /= n;
        if (!val.empty()) {
          const auto e = evaluate_epe(val, model_, cfg_, cfg_.iters_test);
          double s = 0;
          for (const auto& v : e) s += v.back();
          log.val_epe = s / static_cast<double>(e.size());
        }
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(log);
        if (!out_.empty()) {
          std::ofstream csv(out_ / "metrics.csv", std::ios::app);
          csv << log.stage << "," << log.epoch << "," << format_double(log.loss.total) << ","
              << format_double(log.loss.matching) << "," << format_double(log.loss.content) << ","
              << format_double(log.loss.smooth) << "," << format_double(log.loss.recon) << ","
              << format_double(log.val_epe) << "," << format_double(log.seconds) << "\n";
        }
        save_checkpoint(res);
        if (callback_) callback_(log);
      }
    }
    return res;
  }

 private:
  using PyrT = std::vector<Tensor<T>>;

  std::vector<std::pair<PyrT, PyrT>> pyramids(const std::vector<TrainSample>& data) {
    std::vector<std::pair<PyrT, PyrT>> out;
    out.reserve(data.size());
    for (const auto& s : data)
      out.emplace_back(extract_features<T>(s.source, model_.backbone), extract_features<T>(s.target, model_.backbone));
    return out;
  }

  void save_checkpoint(TrainResult& res) {
    if (out_.empty()) {
      last_good_ = model_.to_checkpoint();
      return;
    }
    last_good_ = model_.to_checkpoint();
    const fs::path p = out_ / "checkpoint.bin";
    last_good_->save(p);
    res.last_checkpoint = p.string();
  }

  [[noreturn]] void diverged(const TrainResult& res, int stage, int epoch) {
    if (last_good_) model_.load(*last_good_);
    throw DivergenceError("training diverged (non-finite loss) in stage " + std::to_string(stage) + " epoch " +
                          std::to_string(epoch) + "; parameters restored from the last good checkpoint" +
                          (res.last_checkpoint.empty() ? "" : " " + res.last_checkpoint));
  }

  Model<T>& model_;
  PipelineConfig cfg_;
  fs::path out_;
  Callback callback_;
  std::optional<Checkpoint> last_good_;
};

// Dense image-resolution flow from the level field of one iteration.
inline Tensor<float> image_flow(const Tensor<float>& field, int stride, int height, int width) {
  return upsample_flow(field, stride, height, width);
}

inline double masked_epe(const Tensor<float>& pred, const Tensor<float>& gt, const Mask& valid) {
  double s = 0, n = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (valid.at(0, y, x) <= 0.5f) continue;
      const double dx = double(pred.at(0, y, x)) - gt.at(0, y, x), dy = double(pred.at(1, y, x)) - gt.at(1, y, x);
      s += std::sqrt(dx * dx + dy * dy);
      n += 1;
    }
  if (n == 0) throw MetricError("endpoint error: empty mask");
  return s / n;
}

template <class T>
std::vector<std::vector<double>> evaluate_epe(const std::vector<TrainSample>& samples, Model<T>& model,
                                              const PipelineConfig& cfg, int iters) {
  std::vector<std::vector<double>> out;
  for (const auto& s : samples) {
    Graph<T> g(false);
    auto ps = extract_features(g, g.input(image_tensor<T>(s.source)), model.backbone, false);
    auto pt = extract_features(g, g.input(image_tensor<T>(s.target)), model.backbone, false);
    DroplinkMask mask{std::vector<double>(model.backbone.levels() - 1, cfg.test_gate)};
    auto tr = run_graph(g, ps, pt, model, cfg, iters, mask, Decode::none, false);
    const int stride = s.source.height() / g.value(ps.top()).height();
    std::vector<double> e;
    for (Var f : tr.fields) {
      const auto flow = upsample_flow(g.value(f).template cast<float>(), stride, s.source.height(), s.source.width());
      e.push_back(masked_epe(flow, s.flow, s.valid));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace samnet
