// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"

using namespace samnet;
using namespace samnet::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Largest absolute deviation seen across a criterion's checks.
struct MaxDev {
  double worst = 0;
  bool exact_ok = true;
  void near(double got, double want) {
    if (std::isnan(want)) return;  // not compared
    if (std::isinf(want) || std::isinf(got)) {
      if (got != want) worst = std::numeric_limits<double>::infinity();
      return;
    }
    worst = std::max(worst, std::abs(got - want));
  }
  void tensor(const Tensor<double>& got, const Tensor<double>& want) {
    if (got.shape() != want.shape()) {
      worst = std::numeric_limits<double>::infinity();
      return;
    }
    for (std::size_t i = 0; i < got.size(); ++i) near(got[i], want[i]);
  }
};

std::string fmt(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

// ---- 1: oracle equivalence ----

Outcome oracle_equivalence() {
  MaxDev d;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto a = random_tensor({4, 8, 8}, 100 + s), b = random_tensor({4, 8, 8}, 200 + s);
    const auto st = random_tensor({4, 8, 8}, 300 + s);
    for (int r : {1, 2}) {
      d.tensor(ncc_scores(a, b, r).scores, ncc_oracle(a, b, r));
      const auto got = blended_scores(a, st, b, 0.37, r).scores, want = blended_scores_oracle(a, st, b, 0.37, r);
      d.tensor(got, want);
    }
    const auto A = random_field(8, 8, 400 + s, 0.2, 2.0);
    const auto alpha = random_tensor({1, 8, 8}, 500 + s, 0.05, 1.0);
    for (int r : {0, 1, 2}) d.tensor(blend(a, b, A, alpha, 0.7, r), blend_oracle(a, b, A, alpha, 0.7, r));

    const auto pa = random_tensor({4, 8, 8}, 600 + s, -0.3, 0.3), pb = random_tensor({4, 8, 8}, 700 + s, -0.3, 0.3);
    for (int r : {0, 1})
      for (int iy = 0; iy < 8; ++iy)
        for (int ix = 0; ix < 8; ++ix)
          for (int q : {0, 3, 7}) d.near(patch_distance(pa, pb, iy, ix, q, 7 - q, r), patch_oracle(pa, pb, iy, ix, q, 7 - q, r));
    for (int Q : {1, 2}) {
      const auto K = sam_probability(pa, pb, Q, 1);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) d.near(K.at(0, y, x), k_oracle(pa, pb, y, x, Q, 1));
    }
    for (double tau : {0.0, 2.5})
      for (bool cap : {false, true}) {
        LossConfig c;
        c.tau = tau;
        c.q_radius = 2;
        c.patch_radius = 1;
        c.truncation = cap ? Truncation::cap : Truncation::floor;
        d.near(sam_loss(pa, pb, c), sam_loss_oracle(pa, pb, 2, 1, tau, cap));
      }
    double diag = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) diag += patch_oracle(pa, pb, y, x, y, x, 1);
    Graph<double> g(false);
    d.near(g.value(patch_distance_loss(g, g.input(pa), g.input(pb), 1))[0], diag);
    d.near(content_loss(a, b), content_oracle(a, b));
    const auto im = random_tensor({3, 8, 8}, 800 + s, 0, 1);
    d.near(smoothness_loss(im), smoothness_oracle(im));
  }
  bool wta_exact = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CorrelationVolume<double> v{random_tensor({9, 6, 7}, 900 + s), 1};
    for (auto& x : v.scores.vec()) x = std::round(x * 2) / 2;  // force ties
    for (int a : {0, 1}) {
      const auto got = wta_flow(v, a), want = wta_oracle(v, a);
      wta_exact = wta_exact && got.dx == want.dx && got.dy == want.dy;
    }
  }
  return {d.worst <= 1e-6 && wta_exact, "max |dev| " + fmt(d.worst) + ", wta exact " + (wta_exact ? "yes" : "no")};
}

// ---- 2: identity suite ----

Outcome identity_suite() {
  MaxDev d;
  bool exact = true;
  const auto F = random_tensor({4, 8, 8}, 1);
  exact = exact && warp_target(F, identity_field<double>(8, 8)) == F;
  const auto Ft = random_tensor({4, 8, 8}, 2);
  const auto A = random_field(8, 8, 3);
  exact = exact && blend(F, Ft, A, random_tensor({1, 8, 8}, 4, 0.1, 1), 0.0, 1) == F;
  exact = exact && accumulate(std::vector<Tensor<double>>{}, 8, 8) == identity_field<double>(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) exact = exact && patch_distance(F, F, y, x, y, x, 2) == 0.0;
  const Tensor<double> flat(3, 9, 9, 0.5);
  const auto K = sam_probability(flat, flat, 4, 1);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const int n = (std::min(8, y + 4) - std::max(0, y - 4) + 1) * (std::min(8, x + 4) - std::max(0, x - 4) + 1);
      d.near(K.at(0, y, x), 1.0 / n);
    }
  d.near(K.at(0, 4, 4), 1.0 / 81.0);
  CorrelationVolume<double> uv{Tensor<double>(81, 9, 9, 0.3), 4};
  const auto alpha = confidence(uv);
  d.near(alpha.at(0, 4, 4), 1.0 / 81.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const int n = (std::min(8, y + 4) - std::max(0, y - 4) + 1) * (std::min(8, x + 4) - std::max(0, x - 4) + 1);
      d.near(alpha.at(0, y, x), 1.0 / n);
    }
  return {exact && d.worst <= 1e-6, std::string("exact identities ") + (exact ? "hold" : "FAIL") + ", uniform |dev| " + fmt(d.worst)};
}

// ---- 3: gradient checks ----

Model<double> grad_model(std::uint64_t seed) {
  Rng rng(seed);
  Model<double> m;
  m.backbone = make_toy_backbone<double>(rng, {4, 6, 8});
  m.matcher = MatcherParams<double>(9, rng, 4);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& v : m.matcher.head.weight.value.vec()) v = u(rng);
  for (auto& v : m.matcher.head.bias.value.vec()) v = u(rng);
  return m;
}

PipelineConfig grad_config(MatchObjective obj) {
  PipelineConfig c;
  c.iters_train = 2;
  c.p_radius = 1;
  c.n_radius = 1;
  c.loss.q_radius = 1;
  c.loss.patch_radius = 1;
  c.loss.tau = 0.3;
  c.loss.objective = obj;
  c.loss.w_smooth = 0.1;
  c.freeze_extractor = false;
  c.droplink_probability = 0.5;
  return c;
}

Outcome gradient_checks() {
  double worst = 0;
  std::string worst_name;
  auto note = [&](double e, const std::string& name) {
    if (!(e <= worst)) worst = e, worst_name = name;
  };
  Magnitude mag;
  mag.translation = 2;
  for (auto obj : {MatchObjective::cross_entropy, MatchObjective::patch_distance}) {
    auto m = grad_model(obj == MatchObjective::cross_entropy ? 1 : 2);
    const auto cfg = grad_config(obj);
    const auto pair = generate_synthetic_pair(generate_scene({16, 16}, 11), TransformFamily::affine, mag, 12);
    const auto src = jitter(image_tensor<double>(pair.source), 13), tgt = jitter(image_tensor<double>(pair.target), 14);
    auto all = m.parameters();
    auto f = [&](Graph<double>& g) {
      auto ps = extract_features(g, g.input(src), m.backbone, true);
      auto pt = extract_features(g, g.input(tgt), m.backbone, true);
      return total_loss(g, ps, pt, g.input(src), m, cfg, 5).total;
    };
    for (auto* p : all) note(check_parameter_gradient(f, *p, all, 1e-6, 40), p->name);

    // Feature pyramid and target top level as free inputs.
    const auto fs = extract_features(tensor_image(src), m.backbone), ft = extract_features(tensor_image(tgt), m.backbone);
    std::vector<Tensor<double>> inputs = fs;
    inputs.push_back(ft.back());
    const auto errs = check_input_gradients(
        [&](Graph<double>& g, const std::vector<Var>& v) {
          PyramidVars<double> ps, pt;
          ps.levels.assign(v.begin(), v.begin() + static_cast<long>(fs.size()));
          for (std::size_t h = 0; h + 1 < ft.size(); ++h) pt.levels.push_back(g.input(ft[h]));
          pt.levels.push_back(v.back());
          return total_loss(g, ps, pt, g.input(src), m, cfg, 7).total;
        },
        inputs);
    for (double e : errs) note(e, "feature input");

    // Field as a free input through warp, confidence, blend, decode and the loss terms.
    const auto field = random_field(4, 4, 6, 0.1, 0.8);
    const DroplinkMask mask{{0.4, 0.6}};
    const auto ferr = check_input_gradients(
        [&](Graph<double>& g, const std::vector<Var>& v) {
          PyramidVars<double> ps;
          for (const auto& t : fs) ps.levels.push_back(g.input(t));
          Var s = ps.top(), t = g.input(ft.back());
          Var warped = warp_target(g, t, v[0]);
          Var c = blended_correlation(g, s, s, warped, 0.6, 1);
          Var a = confidence(g, c, 1);
          Var b = blend(g, s, t, v[0], a, 0.6, 1);
          Var img = stylize(g, b, ps, mask, m.backbone, true).image;
          return ops::weighted_sum(g, {{attribute_matching_loss(g, b, warped, cfg.loss), 1.0},
                                       {content_loss(g, b, s), 1.0},
                                       {smoothness_loss(g, img), 0.1}});
        },
        {field});
    note(ferr[0], "field input");
  }
  return {worst <= 1e-3, "max rel error " + fmt(worst) + " (" + worst_name + ")"};
}

// ---- training runs ----

struct Trained {
  Model<float> model;
  double seconds = 0;
};

Trained train_model(const PipelineConfig& cfg, const std::vector<TrainSample>& s1, const std::vector<TrainSample>& s2,
                    const char* tag) {
  Trained t{Model<float>::create(cfg, cfg.seed), 0};
  std::cerr << "[acceptance] training " << tag << " fingerprint=" << config_fingerprint(cfg) << " seed=" << cfg.seed
            << "\n";
  const auto t0 = Clock::now();
  Trainer<float> tr(t.model, cfg, {});
  tr.on_epoch([&](const EpochLog& e) {
    std::cerr << "  " << tag << " stage " << e.stage << " epoch " << e.epoch << " loss " << fmt(e.loss.total) << " ("
              << fmt(seconds_since(t0)) << " s)\n";
  });
  tr.train(s1, s2, {});
  t.seconds = seconds_since(t0);
  return t;
}

double mean_final_epe(const std::vector<TrainSample>& val, Model<float>& m, const PipelineConfig& cfg, int iters) {
  const auto e = evaluate_epe(val, m, cfg, iters);
  double s = 0;
  for (const auto& v : e) s += v.back();
  return s / static_cast<double>(e.size());
}

double mean_pck(const std::vector<TrainSample>& val, Model<float>& m, const PipelineConfig& cfg, int iters, double a) {
  double s = 0;
  for (const auto& v : val) s += pck(predict(v.source, v.target, m, cfg, iters).flow, v.keypoints, a);
  return s / static_cast<double>(val.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PipelineConfig stage1_config() {
  PipelineConfig c;  // toy backbone, 64x64 affine pairs, L = 5 in training
  c.iters_train = 5;
  c.iters_test = 5;
  c.train_pairs = 500;
  c.epochs = 30;
  c.val_pairs = 50;
  return c;
}

// Reduced budget shared by the two ablations: stage 1 then perturbed stage 2.
PipelineConfig ablation_config() {
  PipelineConfig c = stage1_config();
  c.train_pairs = 200;
  c.epochs = 8;
  c.stage2_epochs = 4;
  c.seed = 3;
  return c;
}

// Smooth blob mask for the transfer check.
Mask blob_mask(int n) {
  Mask m(1, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = (x - 0.45 * n) / (0.28 * n), dy = (y - 0.55 * n) / (0.2 * n);
      m.at(0, y, x) = dx * dx + dy * dy <= 1.0 ? 1.0f : 0.0f;
    }
  return m;
}

void report(int id, const char* name, const Outcome& o, double secs) {
  std::printf("criterion %d %-26s %s  %s  [%.1f s]\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
  std::fflush(stdout);
}

}  // namespace

int main() {
  bool all = true;
  auto timed = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0));
    all = all && o.pass;
  };

  timed(1, "oracle-equivalence", [] {
    const auto t0 = Clock::now();
    auto o = oracle_equivalence();
    if (seconds_since(t0) >= 60) o.pass = false, o.detail += ", over the 1 min budget";
    return o;
  });
  timed(2, "identity-suite", identity_suite);
  timed(3, "gradient-checks", [] {
    const auto t0 = Clock::now();
    auto o = gradient_checks();
    if (seconds_since(t0) >= 300) o.pass = false, o.detail += ", over the 5 min budget";
    return o;
  });

  // One stage-1 run serves criteria 4, 5 and 8.
  const PipelineConfig cfg = stage1_config();
  std::optional<Trained> main_run;
  std::vector<TrainSample> val;
  std::string train_error;
  try {
    val = make_samples(cfg, cfg.val_pairs, cfg.seed + 1000, false);
    main_run = train_model(cfg, make_samples(cfg, cfg.train_pairs, cfg.seed, false), {}, "stage1");
  } catch (const std::exception& e) {
    train_error = e.what();
  }

  timed(4, "desk-scale-training", [&]() -> Outcome {
    if (!main_run) return {false, "training failed: " + train_error};
    auto base = Model<float>::create(cfg, cfg.seed);
    const double epe = mean_final_epe(val, main_run->model, cfg, cfg.iters_test);
    const double epe0 = mean_final_epe(val, base, cfg, cfg.iters_test);
    const double p = mean_pck(val, main_run->model, cfg, cfg.iters_test, 0.1);
    const double p0 = mean_pck(val, base, cfg, cfg.iters_test, 0.1);
    const bool ok = epe <= 2.0 && p >= 0.8 && epe < epe0 && main_run->seconds <= 1800;
    return {ok, "EPE " + fmt(epe) + " px (<= 2.0; identity " + fmt(epe0) + "), PCK@0.1 " + fmt(p) + " (>= 0.8; identity " +
                    fmt(p0) + "), train " + fmt(main_run->seconds) + " s (<= 1800)"};
  });

  timed(5, "iterative-convergence", [&]() -> Outcome {
    if (!main_run) return {false, "training failed: " + train_error};
    const auto e = evaluate_epe(val, main_run->model, cfg, 3);
    std::vector<double> it[3];
    int monotone = 0;
    for (const auto& v : e) {
      for (int l = 0; l < 3; ++l) it[l].push_back(v[l]);
      if (v[1] <= v[0] && v[2] <= v[1]) ++monotone;
    }
    const double frac = double(monotone) / double(e.size());
    const double m1 = median(it[0]), m2 = median(it[1]), m3 = median(it[2]);
    const double mean1 = std::accumulate(it[0].begin(), it[0].end(), 0.0) / double(e.size());
    const double mean3 = std::accumulate(it[2].begin(), it[2].end(), 0.0) / double(e.size());
    const bool ok = m2 <= m1 && m3 <= m2 && frac >= 0.9 && mean3 <= mean1;
    return {ok, "median EPE " + fmt(m1) + " / " + fmt(m2) + " / " + fmt(m3) + ", monotone on " + fmt(100 * frac) +
                    "% of pairs (>= 90%), mean " + fmt(mean1) + " -> " + fmt(mean3)};
  });

  // Criteria 6 and 7 share a perturbed benchmark and three equal-budget runs.
  const PipelineConfig ab = ablation_config();
  std::vector<TrainSample> ab_val;
  std::optional<Trained> full, no_att, eq11;
  std::string ab_error;
  try {
    const auto s1 = make_samples(ab, ab.train_pairs, ab.seed, false);
    const auto s2 = make_samples(ab, ab.train_pairs, ab.seed + 1, true);
    ab_val = make_samples(ab, ab.val_pairs, ab.seed + 2000, true);
    full = train_model(ab, s1, s2, "full");
    auto c0 = ab;
    c0.lambda = LambdaRule::zero;
    no_att = train_model(c0, s1, s2, "lambda0");
    auto c11 = ab;
    c11.loss.objective = MatchObjective::patch_distance;
    eq11 = train_model(c11, s1, s2, "patch-distance");
  } catch (const std::exception& e) {
    ab_error = e.what();
  }

  timed(6, "attribute-path-ablation", [&]() -> Outcome {
    if (!full || !no_att) return {false, "training failed: " + ab_error};
    auto c0 = ab;
    c0.lambda = LambdaRule::zero;
    const double ef = mean_final_epe(ab_val, full->model, ab, ab.iters_test);
    const double e0 = mean_final_epe(ab_val, no_att->model, c0, ab.iters_test);
    return {ef < e0, "perturbed EPE full " + fmt(ef) + " vs lambda=0 " + fmt(e0) + " (need strictly lower)"};
  });

  timed(7, "loss-design-ablation", [&]() -> Outcome {
    if (!full || !eq11) return {false, "training failed: " + ab_error};
    auto c11 = ab;
    c11.loss.objective = MatchObjective::patch_distance;
    const double ef = mean_final_epe(ab_val, full->model, ab, ab.iters_test);
    const double e11 = mean_final_epe(ab_val, eq11->model, c11, ab.iters_test);
    return {e11 >= ef * 0.95, "perturbed EPE patch-distance objective " + fmt(e11) + " vs cross-entropy " + fmt(ef) +
                                  " (need >= within 5%)"};
  });

  timed(8, "autoencoding", [&]() -> Outcome {
    if (!main_run) return {false, "training failed: " + train_error};
    double worst_psnr = 1e300, worst_iou = 1, worst_match = 1e300;
    const Mask mask = blob_mask(cfg.image_size);
    for (int i = 0; i < 10; ++i) {
      const Image img = val[i].source;
      const auto pred = predict(img, img, main_run->model, cfg, cfg.iters_test);
      worst_psnr = std::min(worst_psnr, psnr(pred.trace.stylized.back(), img));
      worst_iou = std::min(worst_iou, mask_transfer_iou(pred.flow, mask, mask));
      worst_match = std::min(worst_match, psnr(warp_image(img, pred.flow), img));
    }
    const bool ok = worst_psnr >= 25 && worst_iou >= 0.95;
    return {ok, "min PSNR " + fmt(worst_psnr) + " dB (>= 25), min mask IoU " + fmt(worst_iou) +
                    " (>= 0.95); warped-target PSNR " + fmt(worst_match) + " dB"};
  });

  std::printf("acceptance %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 1;
}
