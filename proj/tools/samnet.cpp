#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "samnet/samnet.hpp"

using namespace samnet;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
  std::string out = "out";
  std::vector<double> alpha{0.05, 0.1, 0.15};
  double threshold_px = 5.0;
  std::string backbone;
  std::string checkpoint;
  std::string extractor;
};

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? PipelineConfig{} : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backbone.empty()) cfg.backbone = parse_backbone_mode(c.backbone);
  if (c.iters) cfg.iters_test = *c.iters;
  cfg.validate();
  return cfg;
}

void log_run(const char* cmd, const PipelineConfig& cfg) {
  std::cerr << "[samnet] " << cmd << " config_fingerprint=" << config_fingerprint(cfg) << " seed=" << cfg.seed << "\n";
}

Model<float> load_model(const Common& c, const PipelineConfig& cfg) {
  auto m = Model<float>::create(cfg, cfg.seed);
  if (!c.extractor.empty()) m.load_extractor(Checkpoint::load(c.extractor));
  if (!c.checkpoint.empty()) m.load(Checkpoint::load(c.checkpoint));
  return m;
}

std::string pair_dir_name(std::string name) {
  for (char& ch : name)
    if (ch == '/' || ch == '|' || ch == ' ') ch = '_';
  return name;
}

int gen_data(const Common& c, int count, bool perturb) {
  const auto cfg = resolve_config(c);
  log_run("gen-data", cfg);
  const fs::path root = c.out;
  const auto samples = make_samples(cfg, count, cfg.seed, perturb);
  for (int i = 0; i < count; ++i) {
    const auto& p = samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "pair%04d", i);
    const fs::path d = root / name;
    write_image(d / "source.png", p.source);
    write_image(d / "target.png", p.target);
    write_flo(d / "flow.flo", p.flow);
    write_mask(d / "valid.png", p.valid);
    write_keypoints(d / "keypoints.csv", p.keypoints.points);
  }
  std::cout << "wrote " << count << " pairs to " << root.string() << "\n";
  return 0;
}

int train(const Common& c) {
  const auto cfg = resolve_config(c);
  log_run("train", cfg);
  auto model = load_model(c, cfg);
  const auto s1 = make_samples(cfg, cfg.train_pairs, cfg.seed, false);
  const auto s2 = cfg.stage2_epochs > 0 ? make_samples(cfg, cfg.train_pairs, cfg.seed + 1, true)
                                        : std::vector<TrainSample>{};
  const auto val = make_samples(cfg, cfg.val_pairs, cfg.seed + 1000, false);
  Trainer<float> t(model, cfg, c.out);
  t.on_epoch([](const EpochLog& e) {
    std::cerr << "stage " << e.stage << " epoch " << e.epoch << " loss " << format_double(e.loss.total) << " val_epe "
              << format_double(e.val_epe) << " (" << format_double(std::round(e.seconds * 10) / 10) << " s)\n";
  });
  const auto res = t.train(s1, s2, val);
  std::cout << "checkpoint " << res.last_checkpoint << "\n";
  return 0;
}

int match(const Common& c, const std::string& src, const std::string& tgt) {
  const auto cfg = resolve_config(c);
  log_run("match", cfg);
  const Image s = read_image(src), t = read_image(tgt);
  auto model = load_model(c, cfg);
  const auto pred = predict(s, t, model, cfg, cfg.iters_test);
  const fs::path out = c.out;
  write_flo(out / "flow.flo", pred.flow);
  const Image warped = warp_image(t, pred.flow);
  write_image(out / "warped.png", warped);
  write_heatmap(out / "confidence.png", pred.confidence);
  if (s.height() == t.height() && s.width() == t.width())
    std::cout << "psnr(warped, target) " << format_double(psnr(warped, t)) << "\n";
  return 0;
}

int transfer(const Common& c, const std::string& src, const std::string& tgt) {
  const auto cfg = resolve_config(c);
  log_run("transfer", cfg);
  const Image s = read_image(src), t = read_image(tgt);
  auto model = load_model(c, cfg);
  const auto pred = predict(s, t, model, cfg, cfg.iters_test);
  const fs::path out = c.out;
  for (std::size_t l = 0; l < pred.trace.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof name, "stylized_%02zu.png", l + 1);
    write_image(out / name, resize_bilinear(pred.trace.stylized[l], s.height(), s.width()));
  }
  std::cout << "wrote " << pred.trace.size() << " stylized images to " << out.string() << "\n";
  return 0;
}

int eval(const Common& c, const std::string& data, const std::string& format, const std::string& split,
         const std::string& pred_dir, double reference) {
  const auto cfg = resolve_config(c);
  log_run("eval", cfg);
  const auto ds = PairDataset::open(data, parse_dataset_format(format), split);
  std::vector<std::string> warnings;
  const auto records = ds.load_all(&warnings);
  for (const auto& w : warnings) std::cerr << "warning: skipped " << w << "\n";
  if (records.empty()) throw IoError("no valid pairs in " + data);
  std::optional<Model<float>> model;
  if (pred_dir.empty()) model = load_model(c, cfg);
  EvalReport rep;
  rep.fingerprint = config_fingerprint(cfg);
  rep.seed = cfg.seed;
  for (const auto& r : records) {
    const Tensor<float> flow = pred_dir.empty() ? predict(r.source, r.target, *model, cfg, cfg.iters_test).flow
                                                : read_flo(fs::path(pred_dir) / pair_dir_name(r.name) / "flow.flo");
    if (flow.height() != r.source.height() || flow.width() != r.source.width())
      throw ShapeError("prediction for " + r.name + " does not match the source size");
    if (r.keypoints && !r.keypoints->points.empty())
      for (double a : c.alpha) rep.add(r.name, "pck", a, pck(flow, *r.keypoints, a, reference));
    if (r.flow) {
      Mask valid(1, r.source.height(), r.source.width(), 1.0f);
      if (r.source_mask && format == "tss") valid = *r.source_mask;
      const fs::path vp = fs::path(data) / pair_dir_name(r.name) / "valid.png";
      if (format == "folder" && fs::exists(vp)) valid = read_mask(vp);
      rep.add(r.name, "epe", std::nan(""), endpoint_error(flow, *r.flow, valid));
      rep.add(r.name, "flow_accuracy", c.threshold_px, flow_accuracy(flow, *r.flow, valid, c.threshold_px));
    }
    if (r.source_mask && r.target_mask) rep.add(r.name, "mask_iou", std::nan(""), mask_transfer_iou(flow, *r.source_mask, *r.target_mask));
  }
  const fs::path out = c.out;
  write_text(out / "report.csv", rep.to_csv());
  write_text(out / "report.json", rep.to_json().dump(2) + "\n");
  for (const auto& v : rep.aggregate())
    std::cout << v.metric << (std::isnan(v.threshold) ? "" : "@" + format_double(v.threshold)) << " "
              << format_double(v.value) << "\n";
  return 0;
}

int report(const Common& c, const std::string& metrics) {
  std::cerr << "[samnet] report seed=" << (c.seed ? *c.seed : 0) << "\n";
  std::istringstream is(read_text(metrics));
  std::string line;
  std::getline(is, line);
  const auto header = split(trim(line), ',');
  std::vector<std::vector<double>> cols(header.size());
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != header.size()) throw IoError("metrics row has " + std::to_string(f.size()) + " fields");
    for (std::size_t k = 0; k < f.size(); ++k) cols[k].push_back(parse_double(f[k]));
  }
  auto col = [&](const std::string& name) -> const std::vector<double>& {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return cols[k];
    throw IoError("metrics file has no column '" + name + "'");
  };
  std::vector<double> x(col("total").size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
  std::vector<Series> losses;
  for (const char* n : {"total", "matching", "content", "smooth", "recon"}) losses.push_back({n, x, col(n)});
  const fs::path out = c.out;
  write_text(out / "loss.svg", svg_line_plot("training loss", "epoch", losses));
  write_text(out / "val_epe.svg", svg_line_plot("validation EPE (px)", "epoch", {{"val_epe", x, col("val_epe")}}));
  std::cout << "wrote loss.svg and val_epe.svg to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent semantic attribute matching: data, training, matching, transfer and evaluation"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", c.config_path, "key = value config file");
    s->add_option("--seed", c.seed, "random seed (overrides the config)");
    s->add_option("--iters", c.iters, "recurrent iterations at test time");
    s->add_option("--out", c.out, "output directory");
    s->add_option("--backbone", c.backbone, "toy|pretrained")->check(CLI::IsMember({"toy", "pretrained"}));
    s->add_option("--checkpoint", c.checkpoint, "trained model checkpoint");
    s->add_option("--extractor", c.extractor, "pretrained extractor weights");
  };

  int count = 100;
  bool perturb = false;
  auto* gen = app.add_subcommand("gen-data", "write synthetic pairs in the folder layout");
  common(gen);
  gen->add_option("--count", count, "number of pairs")->check(CLI::PositiveNumber);
  gen->add_flag("--perturb", perturb, "photometrically perturb the targets");

  auto* tr = app.add_subcommand("train", "two-stage training on synthetic pairs");
  common(tr);

  std::string src, tgt;
  auto* mt = app.add_subcommand("match", "write flow, warped target and confidence map");
  common(mt);
  mt->add_option("--source", src, "source image")->required();
  mt->add_option("--target", tgt, "target image")->required();

  auto* tf = app.add_subcommand("transfer", "write per-iteration stylized images");
  common(tf);
  tf->add_option("--source", src, "source image")->required();
  tf->add_option("--target", tgt, "target image")->required();

  std::string data, format = "folder", split_file, pred_dir;
  double reference = 0;
  auto* ev = app.add_subcommand("eval", "write a CSV/JSON metric report");
  common(ev);
  ev->add_option("--data", data, "dataset root")->required();
  ev->add_option("--format", format, "folder|pf-pascal|tss|cub")
      ->check(CLI::IsMember({"folder", "pf-pascal", "tss", "cub"}));
  ev->add_option("--split", split_file, "split file (pf-pascal, cub)");
  ev->add_option("--pred", pred_dir, "directory of predicted <pair>/flow.flo instead of running the model");
  ev->add_option("--alpha", c.alpha, "PCK thresholds");
  ev->add_option("--threshold-px", c.threshold_px, "flow accuracy threshold in pixels");
  ev->add_option("--pck-reference", reference, "PCK reference length (default max(h, w))");

  std::string metrics;
  auto* rp = app.add_subcommand("report", "plot losses and validation EPE from metrics.csv");
  rp->add_option("--metrics", metrics, "metrics.csv from train")->required();
  rp->add_option("--out", c.out, "output directory");
  rp->add_option("--seed", c.seed, "recorded seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return gen_data(c, count, perturb);
    if (*tr) return train(c);
    if (*mt) return match(c, src, tgt);
    if (*tf) return transfer(c, src, tgt);
    if (*ev) return eval(c, data, format, split_file, pred_dir, reference);
    if (*rp) return report(c, metrics);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
