#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "samnet/io.hpp"
#include "samnet/matching.hpp"

namespace samnet {

// ---- Procedural scenes ----

struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_shapes = 6;
  int max_shapes = 12;
};

// Linear-gradient background with ellipses and rectangles; some shapes carry stripes.
inline Image generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.height < 16 || cfg.width < 16) throw SizeError("generate_scene: images must be at least 16x16");
  std::mt19937_64 rng(seed);
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const int h = cfg.height, w = cfg.width;
  const double size = std::max(h, w);
  Image img(3, h, w);
  double c0[3], c1[3];
  for (auto& v : c0) v = U(0, 1);
  for (auto& v : c1) v = U(0, 1);
  const double ang = U(0, 2 * M_PI);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = ((x - w / 2.0) * std::cos(ang) + (y - h / 2.0) * std::sin(ang)) / (1.4 * size) + 0.5;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
    }
  const int shapes = std::uniform_int_distribution<int>(cfg.min_shapes, cfg.max_shapes)(rng);
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (auto& v : col) v = U(0, 1);
    const double cx = U(0, w), cy = U(0, h);
    const double rx = U(0.05, 0.22) * size, ry = U(0.05, 0.22) * size;
    const double th = U(0, M_PI);
    const bool ellipse = U(0, 1) < 0.5;
    const bool striped = U(0, 1) < 0.3;
    const double freq = U(0.3, 1.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = ((x - cx) * std::cos(th) + (y - cy) * std::sin(th)) / rx;
        const double v = (-(x - cx) * std::sin(th) + (y - cy) * std::cos(th)) / ry;
        const bool in = ellipse ? u * u + v * v <= 1 : std::abs(u) <= 1 && std::abs(v) <= 1;
        if (!in) continue;
        const double stripe = striped ? 0.5 + 0.5 * std::sin(u * 6 * freq) : 1.0;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c] * stripe + (1 - col[c]) * (1 - stripe));
      }
  }
  for (auto& v : img.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

// ---- Synthetic geometric pairs ----

enum class TransformFamily { affine, tps };

inline TransformFamily parse_transform_family(const std::string& s) {
  if (s == "affine") return TransformFamily::affine;
  if (s == "tps") return TransformFamily::tps;
  throw ArgumentError("unknown transform family '" + s + "' (expected affine|tps)");
}

// Sampling ranges; affine parameters act about the image centre.
struct Magnitude {
  double translation = 10.0;  // px, uniform in [-t, t] per axis
  double rotation = 0.25;     // rad
  double scale = 0.15;        // per-axis factor in [1 - s, 1 + s]
  double shear = 0.05;
  double tps_jitter = 0.10;   // control-point jitter as a fraction of the image size

  static Magnitude zero() { return {0, 0, 0, 0, 0}; }
};

// p -> A p + t with origin at the top-left pixel centre.
struct GlobalAffine {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return A * p + t; }
};

// Thin-plate spline displacement d(p) interpolating jittered control points; the forward
// map is p -> p + d(p).
struct ThinPlateSpline {
  std::vector<Eigen::Vector2d> ctrl;
  Eigen::MatrixXd weights;  // (n + 3) x 2

  static double kernel(double r2) { return r2 <= 0 ? 0.0 : r2 * std::log(r2); }

  static ThinPlateSpline fit(const std::vector<Eigen::Vector2d>& ctrl, const std::vector<Eigen::Vector2d>& disp) {
    const int n = static_cast<int>(ctrl.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) K(i, j) = kernel((ctrl[i] - ctrl[j]).squaredNorm());
      K(i, n) = K(n, i) = 1;
      K(i, n + 1) = K(n + 1, i) = ctrl[i].x();
      K(i, n + 2) = K(n + 2, i) = ctrl[i].y();
      rhs.row(i) = disp[i].transpose();
    }
    return {ctrl, K.fullPivLu().solve(rhs)};
  }

  Eigen::Vector2d displacement(const Eigen::Vector2d& p) const {
    const int n = static_cast<int>(ctrl.size());
    Eigen::Vector2d d = weights.row(n).transpose() + weights.row(n + 1).transpose() * p.x() +
                        weights.row(n + 2).transpose() * p.y();
    for (int i = 0; i < n; ++i) d += weights.row(i).transpose() * kernel((p - ctrl[i]).squaredNorm());
    return d;
  }

  // Jacobian of d at p.
  Eigen::Matrix2d jacobian(const Eigen::Vector2d& p) const {
    const int n = static_cast<int>(ctrl.size());
    Eigen::Matrix2d J;
    J.col(0) = weights.row(n + 1).transpose();
    J.col(1) = weights.row(n + 2).transpose();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d r = p - ctrl[i];
      const double r2 = r.squaredNorm();
      if (r2 <= 0) continue;
      const double dk = 2.0 * (std::log(r2) + 1.0);  // dU/dr2 * 2
      J.col(0) += weights.row(i).transpose() * dk * r.x();
      J.col(1) += weights.row(i).transpose() * dk * r.y();
    }
    return J;
  }
};

struct SyntheticPair {
  Image source;
  Image target;
  Tensor<float> flow;    // (2, H, W): source pixel p lands at p + flow(p) in the target
  Tensor<float> affine;  // (6, H, W): local Jacobian A(p) and flow, pixel units
  Mask valid;            // 1 where p + flow(p) lies inside the target
  TransformFamily family = TransformFamily::affine;
  GlobalAffine global;   // affine family only
};

namespace data_detail {

template <class Forward, class Jacobian>
SyntheticPair render_pair(const Image& src, TransformFamily family, Forward fwd, Jacobian jac) {
  const int h = src.height(), w = src.width();
  SyntheticPair pair;
  pair.family = family;
  pair.source = src;
  pair.target = Image(3, h, w);
  pair.flow = Tensor<float>(2, h, w);
  pair.affine = Tensor<float>(field::planes, h, w);
  pair.valid = Mask(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d q = fwd(p);
      const Eigen::Matrix2d J = jac(p);
      pair.flow.at(0, y, x) = static_cast<float>(q.x() - x);
      pair.flow.at(1, y, x) = static_cast<float>(q.y() - y);
      pair.affine.at(field::a00, y, x) = static_cast<float>(J(0, 0));
      pair.affine.at(field::a01, y, x) = static_cast<float>(J(0, 1));
      pair.affine.at(field::a10, y, x) = static_cast<float>(J(1, 0));
      pair.affine.at(field::a11, y, x) = static_cast<float>(J(1, 1));
      pair.affine.at(field::fx, y, x) = pair.flow.at(0, y, x);
      pair.affine.at(field::fy, y, x) = pair.flow.at(1, y, x);
      pair.valid.at(0, y, x) = q.x() >= 0 && q.x() <= w - 1 && q.y() >= 0 && q.y() <= h - 1 ? 1.0f : 0.0f;
    }
  // Target pixel q takes the source value at its pre-image (Newton on fwd(p) = q).
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d q(x, y);
      Eigen::Vector2d p = q;
      for (int it = 0; it < 30; ++it) {
        const Eigen::Vector2d r = fwd(p) - q;
        if (r.norm() < 1e-9) break;
        p -= jac(p).inverse() * r;
      }
      const BilinearTap<double> tap(p.x(), p.y(), w, h);
      for (int c = 0; c < 3; ++c) {
        const float* plane = src.channel(c);
        const double v = (1 - tap.ay) * ((1 - tap.ax) * plane[tap.y0 * w + tap.x0] + tap.ax * plane[tap.y0 * w + tap.x1]) +
                         tap.ay * ((1 - tap.ax) * plane[tap.y1 * w + tap.x0] + tap.ax * plane[tap.y1 * w + tap.x1]);
        pair.target.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return pair;
}

inline double valid_fraction(const Mask& m) {
  double s = 0;
  for (float v : m.vec()) s += v;
  return s / static_cast<double>(m.size());
}

}  // namespace data_detail

inline GlobalAffine sample_affine(const Magnitude& mag, int height, int width, std::mt19937_64& rng) {
  auto U = [&](double r) { return r > 0 ? std::uniform_real_distribution<double>(-r, r)(rng) : 0.0; };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double th = U(mag.rotation);
    const double sx = 1 + U(mag.scale), sy = 1 + U(mag.scale), sh = U(mag.shear);
    Eigen::Matrix2d R;
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Eigen::Matrix2d S;
    S << sx, sh, 0, sy;
    const Eigen::Matrix2d A = R * S;
    const Eigen::Vector2d t(U(mag.translation), U(mag.translation));
    if (std::abs(A.determinant()) < 0.1) continue;
    const Eigen::Vector2d c((width - 1) / 2.0, (height - 1) / 2.0);
    GlobalAffine g;
    g.A = A;
    g.t = c + t - A * c;
    return g;
  }
  throw ArgumentError("sample_affine: could not draw a non-degenerate transform");
}

inline SyntheticPair generate_synthetic_pair(const Image& image, TransformFamily family, const Magnitude& mag,
                                             std::uint64_t seed) {
  require_image(image, "generate_synthetic_pair");
  const int h = image.height(), w = image.width();
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    SyntheticPair pair;
    if (family == TransformFamily::affine) {
      const GlobalAffine g = sample_affine(mag, h, w, rng);
      pair = data_detail::render_pair(
          image, family, [&](const Eigen::Vector2d& p) { return g.apply(p); },
          [&](const Eigen::Vector2d&) -> Eigen::Matrix2d { return g.A; });
      pair.global = g;
    } else {
      std::vector<Eigen::Vector2d> ctrl, disp;
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
          ctrl.emplace_back(gx * (w - 1) / 2.0, gy * (h - 1) / 2.0);
          disp.emplace_back(u(rng) * mag.tps_jitter * w, u(rng) * mag.tps_jitter * h);
        }
      const ThinPlateSpline tps = ThinPlateSpline::fit(ctrl, disp);
      bool degenerate = false;
      for (int y = 0; y < h && !degenerate; y += 4)
        for (int x = 0; x < w && !degenerate; x += 4) {
          const Eigen::Matrix2d J = Eigen::Matrix2d::Identity() + tps.jacobian(Eigen::Vector2d(x, y));
          degenerate = std::abs(J.determinant()) < 0.1;
        }
      if (degenerate) continue;
      pair = data_detail::render_pair(
          image, family, [&](const Eigen::Vector2d& p) { return Eigen::Vector2d(p + tps.displacement(p)); },
          [&](const Eigen::Vector2d& p) { return Eigen::Matrix2d(Eigen::Matrix2d::Identity() + tps.jacobian(p)); });
    }
    if (data_detail::valid_fraction(pair.valid) >= 0.6) return pair;
  }
  throw ArgumentError("generate_synthetic_pair: magnitude leaves fewer than 60% of pixels in bounds");
}

// Seeded global colour shift (+-0.2 s), gamma exp(+-0.5 s) and saturation 1 +- 0.5 s.
inline Image photometric_perturb(const Image& image, double strength, std::uint64_t seed) {
  require_image(image, "photometric_perturb");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ArgumentError("photometric_perturb: strength must lie in [0, 1]");
  if (strength == 0.0) return image;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double shift[3];
  for (auto& s : shift) s = 0.2 * strength * u(rng);
  const double gamma = std::exp(0.5 * strength * u(rng));
  const double sat = 1.0 + 0.5 * strength * u(rng);
  Image out(image.shape());
  const std::size_t n = image.plane();
  for (std::size_t i = 0; i < n; ++i) {
    const double gray = (image[i] + image[n + i] + image[2 * n + i]) / 3.0;
    for (int c = 0; c < 3; ++c) {
      double v = gray + (image[c * n + i] - gray) * sat;
      v = std::pow(std::clamp(v, 0.0, 1.0), gamma) + shift[c];
      out[c * n + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// ---- Keypoints ----

struct Keypoint {
  std::string name;
  double x_src = 0, y_src = 0, x_tgt = 0, y_tgt = 0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointPair {
  std::vector<Keypoint> points;
  int source_height = 0, source_width = 0, target_height = 0, target_width = 0;
  std::string category;

  // Empty string when valid, otherwise the reason.
  std::string check() const {
    for (const auto& k : points) {
      if (!(k.x_src >= 0 && k.x_src <= source_width - 1 && k.y_src >= 0 && k.y_src <= source_height - 1))
        return "source keypoint '" + k.name + "' out of bounds";
      if (!(k.x_tgt >= 0 && k.x_tgt <= target_width - 1 && k.y_tgt >= 0 && k.y_tgt <= target_height - 1))
        return "target keypoint '" + k.name + "' out of bounds";
    }
    return {};
  }
};

inline constexpr const char* keypoint_csv_header = "name,x_src,y_src,x_tgt,y_tgt";

inline std::string keypoints_to_csv(const std::vector<Keypoint>& pts) {
  std::string out = std::string(keypoint_csv_header) + "\n";
  for (const auto& k : pts) {
    if (k.name.find_first_of(",\n") != std::string::npos) throw ArgumentError("keypoint name contains ',' or newline");
    out += k.name + "," + format_double(k.x_src) + "," + format_double(k.y_src) + "," + format_double(k.x_tgt) + "," +
           format_double(k.y_tgt) + "\n";
  }
  return out;
}

inline std::vector<Keypoint> keypoints_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != keypoint_csv_header)
    throw IoError(std::string("keypoint CSV must start with '") + keypoint_csv_header + "'");
  std::vector<Keypoint> out;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw IoError("keypoint CSV row " + std::to_string(row) + ": expected 5 fields");
    out.push_back({f[0], parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
  }
  return out;
}

inline void write_keypoints(const fs::path& path, const std::vector<Keypoint>& pts) {
  write_text(path, keypoints_to_csv(pts));
}
inline std::vector<Keypoint> read_keypoints(const fs::path& path) { return keypoints_from_csv(read_text(path)); }

// Keypoints at random valid source pixels, mapped through the ground-truth flow.
inline KeypointPair synthetic_keypoints(const SyntheticPair& pair, int count, std::uint64_t seed) {
  const int h = pair.source.height(), w = pair.source.width();
  std::vector<std::pair<int, int>> candidates;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (pair.valid.at(0, y, x) > 0.5f) candidates.emplace_back(x, y);
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  KeypointPair kp{{}, h, w, h, w, "synthetic"};
  for (int i = 0; i < count && i < static_cast<int>(candidates.size()); ++i) {
    const auto [x, y] = candidates[i];
    kp.points.push_back({"kp" + std::to_string(i), double(x), double(y), x + double(pair.flow.at(0, y, x)),
                         y + double(pair.flow.at(1, y, x))});
  }
  return kp;
}

// ---- Dataset ingestion ----

enum class DatasetFormat { folder, pf_pascal, tss, cub };

inline DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "folder") return DatasetFormat::folder;
  if (s == "pf-pascal") return DatasetFormat::pf_pascal;
  if (s == "tss") return DatasetFormat::tss;
  if (s == "cub") return DatasetFormat::cub;
  throw ArgumentError("unknown dataset format '" + s + "' (expected pf-pascal|tss|cub|folder)");
}

struct PairRecord {
  std::string name;
  Image source, target;
  std::optional<KeypointPair> keypoints;
  std::optional<Mask> source_mask, target_mask;
  std::optional<Tensor<float>> flow;
};

// Layouts:
//   folder:    ROOT/<pair>/{source,target}.png [+ keypoints.csv, source_mask.png, target_mask.png, flow.flo]
//   tss:       ROOT/<group>/<pair>/{image1,image2}.png [+ flow1.flo, mask1.png, mask2.png]
//   pf-pascal: split CSV (default ROOT/test_pairs.csv) with columns
//              source_image,target_image,class,XA,YA,XB,YB; coordinate lists ';'-separated
//   cub:       ROOT/pairs.txt with "<image_a> <image_b>" per line relative to ROOT/images;
//              masks from ROOT/segmentations with the same relative stem and .png extension
class PairDataset {
 public:
  static PairDataset open(const fs::path& root, DatasetFormat format, const fs::path& split_file = {}) {
    if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
    PairDataset ds;
    ds.root_ = root;
    ds.format_ = format;
    switch (format) {
      case DatasetFormat::folder:
        for (const auto& e : sorted_dirs(root)) ds.entries_.push_back({e.filename().string(), {e.string()}});
        break;
      case DatasetFormat::tss:
        for (const auto& g : sorted_dirs(root))
          for (const auto& e : sorted_dirs(g))
            ds.entries_.push_back({g.filename().string() + "/" + e.filename().string(), {e.string()}});
        break;
      case DatasetFormat::pf_pascal: {
        const fs::path split = split_file.empty() ? root / "test_pairs.csv" : split_file;
        std::istringstream is(read_text(split));
        std::string line;
        std::getline(is, line);
        int row = 0;
        while (std::getline(is, line)) {
          line = trim(line);
          if (line.empty()) continue;
          ds.entries_.push_back({"row" + std::to_string(++row), split_csv_quoted(line)});
        }
        break;
      }
      case DatasetFormat::cub: {
        std::istringstream is(read_text(split_file.empty() ? root / "pairs.txt" : split_file));
        std::string line;
        while (std::getline(is, line)) {
          line = trim(line);
          if (line.empty()) continue;
          std::istringstream ls(line);
          std::string a, b;
          ls >> a >> b;
          ds.entries_.push_back({a + "|" + b, {a, b}});
        }
        break;
      }
    }
    return ds;
  }

  std::size_t size() const noexcept { return entries_.size(); }

  // Loads record i; on malformed input returns nullopt and sets *warning.
  std::optional<PairRecord> load(std::size_t i, std::string* warning = nullptr) const {
    try {
      PairRecord r = load_unchecked(entries_.at(i));
      const std::string why = validate(r);
      if (!why.empty()) throw IoError(why);
      return r;
    } catch (const Error& e) {
      if (warning) *warning = entries_.at(i).name + ": " + e.what();
      return std::nullopt;
    }
  }

  // All valid records; malformed ones are skipped and reported in `warnings`.
  std::vector<PairRecord> load_all(std::vector<std::string>* warnings = nullptr) const {
    std::vector<PairRecord> out;
    for (std::size_t i = 0; i < size(); ++i) {
      std::string w;
      if (auto r = load(i, &w))
        out.push_back(std::move(*r));
      else if (warnings)
        warnings->push_back(w);
    }
    return out;
  }

 private:
  struct Entry {
    std::string name;
    std::vector<std::string> fields;
  };

  static std::vector<fs::path> sorted_dirs(const fs::path& p) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  }

  static std::vector<std::string> split_csv_quoted(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"')
        quoted = !quoted;
      else if (ch == ',' && !quoted) {
        out.push_back(cur);
        cur.clear();
      } else
        cur += ch;
    }
    out.push_back(cur);
    return out;
  }

  static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& f : split(s, ';'))
      if (!trim(f).empty()) out.push_back(parse_double(trim(f)));
    return out;
  }

  static std::string validate(const PairRecord& r) {
    if (r.source.height() < 16 || r.source.width() < 16 || r.target.height() < 16 || r.target.width() < 16)
      return "image smaller than 16x16";
    if (r.keypoints) {
      const std::string why = r.keypoints->check();
      if (!why.empty()) return why;
    }
    auto mask_ok = [](const std::optional<Mask>& m, const Image& img) {
      return !m || (m->height() == img.height() && m->width() == img.width());
    };
    if (!mask_ok(r.source_mask, r.source) || !mask_ok(r.target_mask, r.target)) return "mask size differs from image";
    if (r.flow && (r.flow->height() != r.source.height() || r.flow->width() != r.source.width()))
      return "flow size differs from source image";
    return {};
  }

  KeypointPair attach(std::vector<Keypoint> pts, const PairRecord& r, std::string category = {}) const {
    return {std::move(pts), r.source.height(), r.source.width(), r.target.height(), r.target.width(),
            std::move(category)};
  }

  PairRecord load_unchecked(const Entry& e) const {
    PairRecord r;
    r.name = e.name;
    switch (format_) {
      case DatasetFormat::folder: {
        const fs::path d = e.fields[0];
        r.source = read_image(d / "source.png");
        r.target = read_image(d / "target.png");
        if (fs::exists(d / "keypoints.csv")) r.keypoints = attach(read_keypoints(d / "keypoints.csv"), r);
        if (fs::exists(d / "source_mask.png")) r.source_mask = read_mask(d / "source_mask.png");
        if (fs::exists(d / "target_mask.png")) r.target_mask = read_mask(d / "target_mask.png");
        if (fs::exists(d / "flow.flo")) r.flow = read_flo(d / "flow.flo");
        break;
      }
      case DatasetFormat::tss: {
        const fs::path d = e.fields[0];
        r.source = read_image(d / "image1.png");
        r.target = read_image(d / "image2.png");
        if (fs::exists(d / "flow1.flo")) r.flow = read_flo(d / "flow1.flo");
        if (fs::exists(d / "mask1.png")) r.source_mask = read_mask(d / "mask1.png");
        if (fs::exists(d / "mask2.png")) r.target_mask = read_mask(d / "mask2.png");
        break;
      }
      case DatasetFormat::pf_pascal: {
        if (e.fields.size() < 7) throw IoError("expected 7 columns");
        r.source = read_image(root_ / e.fields[0]);
        r.target = read_image(root_ / e.fields[1]);
        const auto xa = parse_list(e.fields[3]), ya = parse_list(e.fields[4]);
        const auto xb = parse_list(e.fields[5]), yb = parse_list(e.fields[6]);
        if (xa.size() != ya.size() || xb.size() != yb.size() || xa.size() != xb.size())
          throw IoError("keypoint list lengths differ");
        std::vector<Keypoint> pts;
        for (std::size_t k = 0; k < xa.size(); ++k)
          pts.push_back({"kp" + std::to_string(k), xa[k], ya[k], xb[k], yb[k]});
        r.keypoints = attach(std::move(pts), r, e.fields[2]);
        break;
      }
      case DatasetFormat::cub: {
        const fs::path a = e.fields[0], b = e.fields[1];
        r.source = read_image(root_ / "images" / a);
        r.target = read_image(root_ / "images" / b);
        const fs::path ma = root_ / "segmentations" / fs::path(a).replace_extension(".png");
        const fs::path mb = root_ / "segmentations" / fs::path(b).replace_extension(".png");
        if (fs::exists(ma)) r.source_mask = read_mask(ma);
        if (fs::exists(mb)) r.target_mask = read_mask(mb);
        break;
      }
    }
    return r;
  }

  fs::path root_;
  DatasetFormat format_ = DatasetFormat::folder;
  std::vector<Entry> entries_;
};

}  // namespace samnet
