#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "samnet/backbone.hpp"
#include "samnet/data.hpp"
#include "samnet/losses.hpp"

namespace samnet {

enum class LambdaRule { schedule, zero };

struct PipelineConfig {
  // recurrence
  int iters_train = 5;
  int iters_test = 10;
  int p_radius = 4;  // correlation window P
  int n_radius = 1;  // blending window N
  LambdaRule lambda = LambdaRule::schedule;
  double droplink_probability = 0.9;
  double test_gate = 0.5;
  BackboneMode backbone = BackboneMode::toy;
  LossConfig loss;

  // training
  double lr = 1e-3;
  int batch = 8;
  int epochs = 30;         // stage 1
  int stage2_epochs = 0;   // stage 2 (photometric perturbation)
  double perturb_strength = 0.5;
  bool freeze_extractor = true;
  int train_pairs = 500;
  int val_pairs = 50;
  int image_size = 64;
  Magnitude magnitude;
  TransformFamily family = TransformFamily::affine;
  std::uint64_t seed = 1;

  int iterations(bool training) const { return training ? iters_train : iters_test; }
  double lambda_for(int l) const { return lambda == LambdaRule::zero ? 0.0 : lambda_at(l); }

  void validate() const {
    if (iters_train < 1 || iters_test < 1) throw ArgumentError("config: iteration counts must be >= 1");
    if (p_radius < 0 || n_radius < 0) throw ArgumentError("config: radii must be >= 0");
    if (!(droplink_probability >= 0 && droplink_probability <= 1)) throw ArgumentError("config: droplink_probability");
    if (!(test_gate >= 0 && test_gate <= 1)) throw ArgumentError("config: test_gate must lie in [0, 1]");
    if (lr <= 0 || batch < 1 || epochs < 0 || stage2_epochs < 0) throw ArgumentError("config: bad training schedule");
    if (train_pairs < 1 || val_pairs < 1 || image_size < 16) throw ArgumentError("config: bad dataset sizes");
    if (!(perturb_strength >= 0 && perturb_strength <= 1)) throw ArgumentError("config: perturb_strength");
    loss.validate();
  }
};

namespace config_detail {

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ArgumentError("expected a boolean, got '" + v + "'");
}

inline const std::map<std::string, std::function<void(PipelineConfig&, const std::string&)>>& setters() {
  using C = PipelineConfig;
  auto i = [](const std::string& v) { return static_cast<int>(parse_double(v)); };
  static const std::map<std::string, std::function<void(C&, const std::string&)>> m = {
      {"iters_train", [=](C& c, const std::string& v) { c.iters_train = i(v); }},
      {"iters_test", [=](C& c, const std::string& v) { c.iters_test = i(v); }},
      {"p_radius", [=](C& c, const std::string& v) { c.p_radius = i(v); }},
      {"n_radius", [=](C& c, const std::string& v) { c.n_radius = i(v); }},
      {"q_radius", [=](C& c, const std::string& v) { c.loss.q_radius = i(v); }},
      {"patch_radius", [=](C& c, const std::string& v) { c.loss.patch_radius = i(v); }},
      {"lambda", [](C& c, const std::string& v) {
         if (v == "schedule") c.lambda = LambdaRule::schedule;
         else if (v == "zero") c.lambda = LambdaRule::zero;
         else throw ArgumentError("lambda must be schedule|zero");
       }},
      {"droplink_probability", [](C& c, const std::string& v) { c.droplink_probability = parse_double(v); }},
      {"test_gate", [](C& c, const std::string& v) { c.test_gate = parse_double(v); }},
      {"backbone", [](C& c, const std::string& v) { c.backbone = parse_backbone_mode(v); }},
      {"tau", [](C& c, const std::string& v) { c.loss.tau = parse_double(v); }},
      {"w_content", [](C& c, const std::string& v) { c.loss.w_content = parse_double(v); }},
      {"w_smooth", [](C& c, const std::string& v) { c.loss.w_smooth = parse_double(v); }},
      {"w_recon", [](C& c, const std::string& v) { c.loss.w_recon = parse_double(v); }},
      {"truncation", [](C& c, const std::string& v) {
         if (v == "max") c.loss.truncation = Truncation::floor;
         else if (v == "min") c.loss.truncation = Truncation::cap;
         else throw ArgumentError("truncation must be max|min");
       }},
      {"objective", [](C& c, const std::string& v) {
         if (v == "cross_entropy") c.loss.objective = MatchObjective::cross_entropy;
         else if (v == "patch_distance") c.loss.objective = MatchObjective::patch_distance;
         else throw ArgumentError("objective must be cross_entropy|patch_distance");
       }},
      {"lr", [](C& c, const std::string& v) { c.lr = parse_double(v); }},
      {"batch", [=](C& c, const std::string& v) { c.batch = i(v); }},
      {"epochs", [=](C& c, const std::string& v) { c.epochs = i(v); }},
      {"stage2_epochs", [=](C& c, const std::string& v) { c.stage2_epochs = i(v); }},
      {"perturb_strength", [](C& c, const std::string& v) { c.perturb_strength = parse_double(v); }},
      {"freeze_extractor", [](C& c, const std::string& v) { c.freeze_extractor = parse_bool(v); }},
      {"train_pairs", [=](C& c, const std::string& v) { c.train_pairs = i(v); }},
      {"val_pairs", [=](C& c, const std::string& v) { c.val_pairs = i(v); }},
      {"image_size", [=](C& c, const std::string& v) { c.image_size = i(v); }},
      {"translation", [](C& c, const std::string& v) { c.magnitude.translation = parse_double(v); }},
      {"rotation", [](C& c, const std::string& v) { c.magnitude.rotation = parse_double(v); }},
      {"scale", [](C& c, const std::string& v) { c.magnitude.scale = parse_double(v); }},
      {"shear", [](C& c, const std::string& v) { c.magnitude.shear = parse_double(v); }},
      {"tps_jitter", [](C& c, const std::string& v) { c.magnitude.tps_jitter = parse_double(v); }},
      {"family", [](C& c, const std::string& v) { c.family = parse_transform_family(v); }},
      {"seed", [](C& c, const std::string& v) { c.seed = std::stoull(v); }},
  };
  return m;
}

}  // namespace config_detail

// "key = value" lines; '#' starts a comment. Unknown keys are errors.
inline void apply_config_text(PipelineConfig& cfg, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(row) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto& s = config_detail::setters();
    auto it = s.find(key);
    if (it == s.end()) throw ArgumentError("config line " + std::to_string(row) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument&) {
      throw ArgumentError("config line " + std::to_string(row) + ": bad value '" + value + "'");
    } catch (const IoError&) {
      throw ArgumentError("config line " + std::to_string(row) + ": bad value '" + value + "'");
    }
  }
  cfg.validate();
}

inline PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  apply_config_text(cfg, read_text(path));
  return cfg;
}

inline std::string config_text(const PipelineConfig& c) {
  std::ostringstream os;
  auto d = [](double v) { return format_double(v); };
  os << "iters_train = " << c.iters_train << "\n"
     << "iters_test = " << c.iters_test << "\n"
     << "p_radius = " << c.p_radius << "\n"
     << "n_radius = " << c.n_radius << "\n"
     << "q_radius = " << c.loss.q_radius << "\n"
     << "patch_radius = " << c.loss.patch_radius << "\n"
     << "lambda = " << (c.lambda == LambdaRule::zero ? "zero" : "schedule") << "\n"
     << "droplink_probability = " << d(c.droplink_probability) << "\n"
     << "test_gate = " << d(c.test_gate) << "\n"
     << "backbone = " << to_string(c.backbone) << "\n"
     << "tau = " << d(c.loss.tau) << "\n"
     << "w_content = " << d(c.loss.w_content) << "\n"
     << "w_smooth = " << d(c.loss.w_smooth) << "\n"
     << "w_recon = " << d(c.loss.w_recon) << "\n"
     << "truncation = " << (c.loss.truncation == Truncation::floor ? "max" : "min") << "\n"
     << "objective = " << (c.loss.objective == MatchObjective::cross_entropy ? "cross_entropy" : "patch_distance")
     << "\n"
     << "lr = " << d(c.lr) << "\n"
     << "batch = " << c.batch << "\n"
     << "epochs = " << c.epochs << "\n"
     << "stage2_epochs = " << c.stage2_epochs << "\n"
     << "perturb_strength = " << d(c.perturb_strength) << "\n"
     << "freeze_extractor = " << (c.freeze_extractor ? "true" : "false") << "\n"
     << "train_pairs = " << c.train_pairs << "\n"
     << "val_pairs = " << c.val_pairs << "\n"
     << "image_size = " << c.image_size << "\n"
     << "translation = " << d(c.magnitude.translation) << "\n"
     << "rotation = " << d(c.magnitude.rotation) << "\n"
     << "scale = " << d(c.magnitude.scale) << "\n"
     << "shear = " << d(c.magnitude.shear) << "\n"
     << "tps_jitter = " << d(c.magnitude.tps_jitter) << "\n"
     << "family = " << (c.family == TransformFamily::affine ? "affine" : "tps") << "\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

// FNV-1a over the canonical config text, hex.
inline std::string config_fingerprint(const PipelineConfig& c) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config_text(c)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace samnet
