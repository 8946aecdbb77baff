#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace samnet;
using namespace samnet::testing;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("samnet_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Linear colour ramp; bilinear interpolation reproduces it exactly.
Image ramp(int h, int w) {
  Image im(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      im.at(0, y, x) = 0.1f + 0.8f * x / (w - 1);
      im.at(1, y, x) = 0.1f + 0.8f * y / (h - 1);
      im.at(2, y, x) = 0.2f + 0.3f * (x + y) / (w + h - 2);
    }
  return im;
}

float sample(const Image& im, int c, double x, double y) {
  const BilinearTap<float> t(static_cast<float>(x), static_cast<float>(y), im.width(), im.height());
  return t.value(im.channel(c), im.width());
}

double valid_fraction_of(const SyntheticPair& p) { return data_detail::valid_fraction(p.valid); }

}  // namespace

TEST(Scene, DeterministicAndInRange) {
  const auto a = generate_scene({64, 64}, 5), b = generate_scene({64, 64}, 5), c = generate_scene({64, 64}, 6);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (float v : a.vec()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(generate_scene({8, 64}, 1), SizeError);
}

TEST(SyntheticPair, ZeroMagnitudeIsIdentity) {
  const Image img = generate_scene({32, 32}, 1);
  for (auto fam : {TransformFamily::affine, TransformFamily::tps}) {
    const auto p = generate_synthetic_pair(img, fam, Magnitude::zero(), 3);
    EXPECT_EQ(p.target, img);
    for (float v : p.flow.vec()) EXPECT_NEAR(v, 0.0f, 1e-9f);
    EXPECT_EQ(valid_fraction_of(p), 1.0);
  }
}

TEST(SyntheticPair, PureTranslationFlow) {
  const Image img = generate_scene({32, 32}, 2);
  const auto p = data_detail::render_pair(
      img, TransformFamily::affine, [](const Eigen::Vector2d& q) { return Eigen::Vector2d(q + Eigen::Vector2d(3, -2)); },
      [](const Eigen::Vector2d&) -> Eigen::Matrix2d { return Eigen::Matrix2d::Identity(); });
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      EXPECT_FLOAT_EQ(p.flow.at(0, y, x), 3.0f);
      EXPECT_FLOAT_EQ(p.flow.at(1, y, x), -2.0f);
      EXPECT_EQ(p.valid.at(0, y, x) > 0.5f, x <= 28 && y >= 2);
      if (x <= 28 && y >= 2) {
        for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(p.target.at(c, y - 2, x + 3), img.at(c, y, x));
      }
    }
}

TEST(SyntheticPair, RandomAffineRoundTrip) {
  const Image img = ramp(48, 48);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = generate_synthetic_pair(img, TransformFamily::affine, Magnitude{}, 100 + s);
    EXPECT_GE(valid_fraction_of(p), 0.6);
    EXPECT_GE(std::abs(p.global.A.determinant()), 0.1);
    int checked = 0;
    for (int y = 3; y < 45; ++y)
      for (int x = 3; x < 45; ++x) {
        const double qx = x + p.flow.at(0, y, x), qy = y + p.flow.at(1, y, x);
        if (p.valid.at(0, y, x) < 0.5f || qx < 1 || qx > 46 || qy < 1 || qy > 46) continue;
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(sample(p.target, c, qx, qy), img.at(c, y, x), 1e-3);
        ++checked;
      }
    EXPECT_GT(checked, 500);
  }
}

TEST(SyntheticPair, AffinePlanesMatchGlobalTransform) {
  const Image img = generate_scene({32, 32}, 3);
  const auto p = generate_synthetic_pair(img, TransformFamily::affine, Magnitude{}, 4);
  for (int y = 0; y < 32; y += 5)
    for (int x = 0; x < 32; x += 5) {
      const Eigen::Vector2d q = p.global.apply(Eigen::Vector2d(x, y));
      EXPECT_NEAR(p.flow.at(0, y, x), q.x() - x, 1e-4);
      EXPECT_NEAR(p.flow.at(1, y, x), q.y() - y, 1e-4);
      EXPECT_NEAR(p.affine.at(field::a01, y, x), p.global.A(0, 1), 1e-6);
    }
}

TEST(SyntheticPair, TpsInterpolatesControlPointsAndJacobian) {
  std::vector<Eigen::Vector2d> ctrl, disp;
  Rng rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int gy = 0; gy < 3; ++gy)
    for (int gx = 0; gx < 3; ++gx) ctrl.emplace_back(gx * 15.5, gy * 15.5), disp.emplace_back(u(rng), u(rng));
  const auto tps = ThinPlateSpline::fit(ctrl, disp);
  for (std::size_t i = 0; i < ctrl.size(); ++i) EXPECT_NEAR((tps.displacement(ctrl[i]) - disp[i]).norm(), 0.0, 1e-9);
  const Eigen::Vector2d p(7.3, 20.1);
  const double e = 1e-5;
  const Eigen::Matrix2d J = tps.jacobian(p);
  const Eigen::Vector2d dx = (tps.displacement(p + Eigen::Vector2d(e, 0)) - tps.displacement(p - Eigen::Vector2d(e, 0))) / (2 * e);
  const Eigen::Vector2d dy = (tps.displacement(p + Eigen::Vector2d(0, e)) - tps.displacement(p - Eigen::Vector2d(0, e))) / (2 * e);
  EXPECT_NEAR((J.col(0) - dx).norm(), 0.0, 1e-6);
  EXPECT_NEAR((J.col(1) - dy).norm(), 0.0, 1e-6);
  const auto pair = generate_synthetic_pair(generate_scene({32, 32}, 2), TransformFamily::tps, Magnitude{}, 9);
  EXPECT_GE(valid_fraction_of(pair), 0.6);
}

TEST(SyntheticPair, SeededDeterminismAndTooLargeMagnitude) {
  const Image img = generate_scene({32, 32}, 4);
  const auto a = generate_synthetic_pair(img, TransformFamily::affine, Magnitude{}, 7);
  const auto b = generate_synthetic_pair(img, TransformFamily::affine, Magnitude{}, 7);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.flow, b.flow);
  Magnitude huge;
  huge.translation = 1000;
  EXPECT_THROW(generate_synthetic_pair(img, TransformFamily::affine, huge, 1), ArgumentError);
}

TEST(Photometric, IdentityDeterminismAndBoundedShift) {
  const Image img = generate_scene({32, 32}, 5);
  EXPECT_EQ(photometric_perturb(img, 0.0, 3), img);
  EXPECT_EQ(photometric_perturb(img, 0.5, 3), photometric_perturb(img, 0.5, 3));
  double total = 0;
  const int n = 50;
  for (int s = 0; s < n; ++s) {
    const Image out = photometric_perturb(img, 0.5, s);
    double shift = 0;
    for (int c = 0; c < 3; ++c) {
      double a = 0, b = 0;
      for (std::size_t i = 0; i < img.plane(); ++i) a += img.channel(c)[i], b += out.channel(c)[i];
      shift = std::max(shift, std::abs(a - b) / img.plane());
    }
    for (float v : out.vec()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    EXPECT_LT(shift, 0.35);
    total += shift;
  }
  EXPECT_GT(total / n, 0.02);
  EXPECT_THROW(photometric_perturb(img, 1.5, 1), ArgumentError);
}

TEST(Keypoints, CsvRoundTripIsBitExact) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0, 63);
  std::vector<Keypoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({"p" + std::to_string(i), u(rng), u(rng), u(rng), u(rng)});
  pts.push_back({"third", 1.0 / 3.0, 0.1, 1e-17, 62.999999999999993});
  const fs::path d = temp_dir("kp");
  write_keypoints(d / "k.csv", pts);
  const auto back = read_keypoints(d / "k.csv");
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(back[i], pts[i]);
  EXPECT_THROW(keypoints_from_csv("bad header\n"), IoError);
  EXPECT_THROW(keypoints_from_csv(std::string(keypoint_csv_header) + "\na,1,2\n"), IoError);
  EXPECT_THROW(keypoints_to_csv({{"a,b", 0, 0, 0, 0}}), ArgumentError);
}

TEST(Keypoints, SyntheticKeypointsFollowFlow) {
  const auto p = generate_synthetic_pair(generate_scene({32, 32}, 6), TransformFamily::affine, Magnitude{}, 8);
  const auto kp = synthetic_keypoints(p, 15, 1);
  EXPECT_EQ(kp.points.size(), 15u);
  EXPECT_EQ(kp.check(), "");
  for (const auto& k : kp.points) {
    const int x = static_cast<int>(k.x_src), y = static_cast<int>(k.y_src);
    EXPECT_EQ(k.x_tgt, x + double(p.flow.at(0, y, x)));
  }
}

TEST(Io, ImageMaskAndFlowRoundTrips) {
  const fs::path d = temp_dir("io");
  const Image img = generate_scene({20, 24}, 1);
  write_image(d / "a.png", img);
  const Image back = read_image(d / "a.png");
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 0.5 / 255 + 1e-6);
  Mask m(1, 20, 24);
  for (int x = 3; x < 10; ++x) m.at(0, 5, x) = 1;
  write_mask(d / "m.png", m);
  EXPECT_EQ(read_mask(d / "m.png"), m);
  const auto flow = random_tensor<float>({2, 7, 9}, 3, -5, 5);
  write_flo(d / "f.flo", flow);
  EXPECT_EQ(read_flo(d / "f.flo"), flow);
  write_text(d / "bad.flo", "nope");
  EXPECT_THROW(read_flo(d / "bad.flo"), IoError);
  EXPECT_THROW(read_image(d / "missing.png"), IoError);
}

TEST(Io, DoubleFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_THROW(parse_double("1.5x"), IoError);
  EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
}

TEST(Dataset, FolderLayout) {
  const fs::path root = temp_dir("ds_folder");
  EXPECT_EQ(PairDataset::open(root, DatasetFormat::folder).size(), 0u);
  EXPECT_THROW(PairDataset::open(root / "nope", DatasetFormat::folder), IoError);
  fs::create_directories(root / "pair1");
  write_image(root / "pair1/source.png", generate_scene({32, 32}, 1));
  write_image(root / "pair1/target.png", generate_scene({32, 32}, 2));
  write_keypoints(root / "pair1/keypoints.csv", {{"a", 1, 2, 3, 4}});
  auto ds = PairDataset::open(root, DatasetFormat::folder);
  ASSERT_EQ(ds.size(), 1u);
  auto recs = ds.load_all();
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].keypoints->points.size(), 1u);
  // Malformed record: keypoint out of bounds becomes a warning.
  fs::create_directories(root / "pair2");
  write_image(root / "pair2/source.png", generate_scene({32, 32}, 3));
  write_image(root / "pair2/target.png", generate_scene({32, 32}, 4));
  write_keypoints(root / "pair2/keypoints.csv", {{"a", 100, 2, 3, 4}});
  std::vector<std::string> warnings;
  recs = PairDataset::open(root, DatasetFormat::folder).load_all(&warnings);
  EXPECT_EQ(recs.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("pair2"), std::string::npos);
}

TEST(Dataset, PfPascalTssAndCubLayouts) {
  const fs::path root = temp_dir("ds_pf");
  fs::create_directories(root / "img");
  write_image(root / "img/a.png", generate_scene({32, 32}, 1));
  write_image(root / "img/b.png", generate_scene({32, 32}, 2));
  write_text(root / "test_pairs.csv",
             "source_image,target_image,class,XA,YA,XB,YB\nimg/a.png,img/b.png,cat,\"1;2\",\"3;4\",\"5;6\",\"7;8\"\n"
             "img/a.png,img/missing.png,cat,1,1,1,1\n");
  std::vector<std::string> warnings;
  const auto recs = PairDataset::open(root, DatasetFormat::pf_pascal).load_all(&warnings);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].keypoints->category, "cat");
  EXPECT_EQ(recs[0].keypoints->points[1].y_tgt, 8.0);
  EXPECT_EQ(warnings.size(), 1u);

  const fs::path tss = temp_dir("ds_tss");
  fs::create_directories(tss / "FG3DCar/p1");
  write_image(tss / "FG3DCar/p1/image1.png", generate_scene({32, 32}, 1));
  write_image(tss / "FG3DCar/p1/image2.png", generate_scene({32, 32}, 2));
  write_flo(tss / "FG3DCar/p1/flow1.flo", Tensor<float>(2, 32, 32));
  const auto t = PairDataset::open(tss, DatasetFormat::tss).load_all();
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].name, "FG3DCar/p1");
  EXPECT_TRUE(t[0].flow.has_value());

  const fs::path cub = temp_dir("ds_cub");
  fs::create_directories(cub / "images/birds");
  fs::create_directories(cub / "segmentations/birds");
  write_image(cub / "images/birds/x.jpg", generate_scene({32, 32}, 1));
  write_image(cub / "images/birds/y.jpg", generate_scene({32, 32}, 2));
  write_mask(cub / "segmentations/birds/x.png", Mask(1, 32, 32, 1.0f));
  write_text(cub / "pairs.txt", "birds/x.jpg birds/y.jpg\n");
  const auto c = PairDataset::open(cub, DatasetFormat::cub).load_all();
  ASSERT_EQ(c.size(), 1u);
  EXPECT_TRUE(c[0].source_mask.has_value());
  EXPECT_FALSE(c[0].target_mask.has_value());
  EXPECT_THROW(parse_dataset_format("voc"), ArgumentError);
}
