#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace samnet;
using namespace samnet::testing;

namespace {

PipelineConfig small_cfg() {
  PipelineConfig c;
  c.image_size = 32;
  c.iters_train = 2;
  c.iters_test = 3;
  c.batch = 4;
  c.epochs = 2;
  c.magnitude.translation = 4;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("samnet_pipe_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Run, UntrainedTraceContract) {
  const auto cfg = small_cfg();
  auto m = Model<float>::create(cfg, 1);
  const auto s = make_samples(cfg, 1, 3, false)[0];
  const auto tr = run(s.source, s.target, m, cfg, RunMode::test);
  ASSERT_EQ(tr.size(), 3u);
  ASSERT_EQ(tr.stylized.size(), 3u);
  for (std::size_t l = 0; l < tr.size(); ++l) {
    EXPECT_EQ(tr.fields[l], identity_field<float>(4, 4));
    for (float v : tr.stylized[l].vec()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    for (float a : tr.confidence[l].vec()) ASSERT_TRUE(a > 0.0f && a < 1.0f);
  }
  EXPECT_EQ(run(s.source, s.target, m, cfg, RunMode::train, 4, 9).size(), 4u);
  EXPECT_EQ(matching_stride(m.backbone, 64), 8);
}

TEST(Run, ErrorsCarryIterationIndex) {
  auto cfg = small_cfg();
  auto m = Model<float>::create(cfg, 1);
  cfg.p_radius = 2;  // matcher was built for a radius-4 window
  const auto s = make_samples(cfg, 1, 3, false)[0];
  try {
    run(s.source, s.target, m, cfg, RunMode::test);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run(s.source, Image(3, 32, 48), m, cfg, RunMode::test), ShapeError);
}

TEST(Model, CheckpointRoundTrip) {
  const auto cfg = small_cfg();
  auto a = Model<float>::create(cfg, 1);
  auto b = Model<float>::create(cfg, 2);
  const fs::path d = temp_dir("ckpt");
  fs::create_directories(d);
  a.to_checkpoint().save(d / "m.bin");
  b.load(Checkpoint::load(d / "m.bin"));
  const auto s = make_samples(cfg, 1, 4, false)[0];
  EXPECT_EQ(run(s.source, s.target, a, cfg, RunMode::test).stylized.back(),
            run(s.source, s.target, b, cfg, RunMode::test).stylized.back());
  auto other = cfg;
  other.p_radius = 2;
  auto c = Model<float>::create(other, 1);
  EXPECT_THROW(c.load(a.to_checkpoint()), ShapeError);
}

TEST(Trainer, DeterministicLossCurveAndArtifacts) {
  const auto cfg = small_cfg();
  const auto train = make_samples(cfg, 8, 10, false), val = make_samples(cfg, 2, 20, false);
  std::vector<double> curves[2];
  for (int k = 0; k < 2; ++k) {
    auto m = Model<float>::create(cfg, cfg.seed);
    Trainer<float> t(m, cfg, temp_dir("det" + std::to_string(k)));
    const auto res = t.train(train, {}, val);
    ASSERT_EQ(res.log.size(), 2u);
    for (const auto& e : res.log) curves[k].push_back(e.loss.total), curves[k].push_back(e.val_epe);
  }
  for (std::size_t i = 0; i < curves[0].size(); ++i) EXPECT_EQ(curves[0][i], curves[1][i]) << i;
  const fs::path d = fs::temp_directory_path() / "samnet_pipe_det0";
  EXPECT_TRUE(fs::exists(d / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(d / "config.txt"));
  const auto csv = read_text(d / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  PipelineConfig back;
  apply_config_text(back, read_text(d / "config.txt"));
  EXPECT_EQ(config_fingerprint(back), config_fingerprint(cfg));
}

TEST(Trainer, SaturatedTruncationLeavesMatcherUntouched) {
  auto cfg = small_cfg();
  cfg.loss.tau = 1e9;
  cfg.loss.w_content = 0;
  cfg.loss.w_smooth = 0;
  cfg.epochs = 1;
  const auto train = make_samples(cfg, 4, 30, false), val = make_samples(cfg, 2, 40, false);
  auto m = Model<float>::create(cfg, 3);
  const auto before = m.to_checkpoint();
  const double base = evaluate_epe(val, m, cfg, 3)[0].back();
  Trainer<float> t(m, cfg, {});
  t.train(train, {}, val);
  for (auto* p : m.matcher.parameters()) EXPECT_EQ(p->value, before.get(p->name)) << p->name;
  EXPECT_EQ(evaluate_epe(val, m, cfg, 3)[0].back(), base);
}

TEST(Trainer, DivergenceRestoresLastGoodParameters) {
  auto cfg = small_cfg();
  cfg.epochs = 2;
  auto train = make_samples(cfg, 4, 50, false);
  train[2].source.at(0, 5, 5) = std::nanf("");
  auto m = Model<float>::create(cfg, 4);
  const auto before = m.to_checkpoint();
  Trainer<float> t(m, cfg, temp_dir("div"));
  EXPECT_THROW(t.train(train, {}, {}), DivergenceError);
  for (auto* p : m.parameters()) EXPECT_EQ(p->value, before.get(p->name)) << p->name;
}

TEST(Trainer, FrozenExtractorStaysFixedAndTrainingMovesMatcher) {
  auto cfg = small_cfg();
  cfg.epochs = 1;
  cfg.stage2_epochs = 1;
  const auto s1 = make_samples(cfg, 4, 60, false), s2 = make_samples(cfg, 4, 61, true);
  auto m = Model<float>::create(cfg, 5);
  const auto before = m.to_checkpoint();
  Trainer<float> t(m, cfg, {});
  std::vector<int> stages;
  t.on_epoch([&](const EpochLog& e) { stages.push_back(e.stage); });
  t.train(s1, s2, {});
  EXPECT_EQ(stages, (std::vector<int>{1, 2}));
  for (auto* p : m.backbone.extractor_parameters()) EXPECT_EQ(p->value, before.get(p->name));
  EXPECT_FALSE(m.matcher.head.weight.value == before.get("matcher.head.weight"));
}

TEST(Samples, PerturbedStageChangesOnlyTargets) {
  const auto cfg = small_cfg();
  const auto a = make_samples(cfg, 3, 7, false), b = make_samples(cfg, 3, 7, true);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].source, b[i].source);
    EXPECT_EQ(a[i].flow, b[i].flow);
    EXPECT_FALSE(a[i].target == b[i].target);
  }
}

TEST(Evaluate, IdentityBaselineEqualsZeroFlowError) {
  const auto cfg = small_cfg();
  auto m = Model<float>::create(cfg, 1);
  const auto val = make_samples(cfg, 3, 8, false);
  const auto e = evaluate_epe(val, m, cfg, 2);
  for (std::size_t i = 0; i < val.size(); ++i) {
    ASSERT_EQ(e[i].size(), 2u);
    EXPECT_NEAR(e[i][1], endpoint_error(Tensor<float>(2, 32, 32), val[i].flow, val[i].valid), 1e-6);
  }
}

TEST(Config, ValidationRejectsBadValues) {
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.droplink_probability = 1.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = PipelineConfig{};
  c.lambda = LambdaRule::zero;
  EXPECT_EQ(c.lambda_for(3), 0.0);
  c.lambda = LambdaRule::schedule;
  EXPECT_EQ(c.lambda_for(3), lambda_at(3));
}
