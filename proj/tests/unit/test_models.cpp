#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "ssvo/errors.hpp"
#include "ssvo/image.hpp"
#include "ssvo/models.hpp"
#include "ssvo/ops.hpp"
#include "test_util.hpp"

namespace ssvo {
namespace {

using test::random_tensor;

ModelConfig small_config(std::size_t h = 16, std::size_t w = 52, std::size_t c = 4) {
  ModelConfig m;
  m.disp.height = m.pose.height = h;
  m.disp.width = m.pose.width = w;
  m.disp.base_channels = m.pose.base_channels = c;
  return m;
}

bool equal_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

TEST(DispNet, OutputsStayInsideTheDisparityInterval) {
  const ModelConfig cfg = small_config();
  const double lo = 1.0 / (cfg.disp.alpha + cfg.disp.beta), hi = 1.0 / cfg.disp.beta;
  EXPECT_NEAR(lo, 0.0990099009900990, 1e-15);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParamStore p = init_parameters(cfg, seed);
    std::mt19937_64 rng(seed);
    for (Mode mode : {Mode::train, Mode::inference}) {
      const DispOutput out = disp_net_forward(p, cfg, random_tensor({2, 3, 16, 52}, rng, -5, 5, false), mode);
      for (const auto& d : out.disparities)
        for (double v : d.data()) {
          EXPECT_GT(v, lo);
          EXPECT_LT(v, hi);
        }
    }
  }
}

TEST(DispNet, ExtremePreActivationsSaturateAtTheBounds) {
  const ModelConfig cfg = small_config();
  const double lo = 1.0 / (cfg.disp.alpha + cfg.disp.beta), hi = 1.0 / cfg.disp.beta;
  for (double bias : {1e6, -1e6}) {
    ParamStore p = init_parameters(cfg, 1);
    for (auto& e : p.entries())
      if (e.name.find(".pred") != std::string::npos && e.name.ends_with(".bias"))
        for (auto& v : e.tensor.mutable_data()) v = bias;
    const DispOutput out = disp_net_forward(p, cfg, Tensor::full({1, 3, 16, 52}, 0.5), Mode::inference);
    for (const auto& d : out.disparities)
      for (double v : d.data()) {
        // sigmoid(+-1e6) rounds to exactly 1 or 0, so the open interval
        // closes onto its end points in floating point.
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, lo);
        EXPECT_LE(v, hi);
        EXPECT_EQ(v, bias > 0 ? lo : hi);
      }
  }
}

TEST(DispNet, PyramidShapesAtFullResolution) {
  ModelConfig cfg = small_config(128, 416, 1);
  ParamStore p = init_parameters(cfg, 0);
  const DispOutput out = disp_net_forward(p, cfg, Tensor::full({1, 3, 128, 416}, 0.3), Mode::inference);
  ASSERT_EQ(out.disparities.size(), 4u);
  EXPECT_EQ(out.disparities[0].shape(), (Shape{1, 1, 128, 416}));
  EXPECT_EQ(out.disparities[1].shape(), (Shape{1, 1, 64, 208}));
  EXPECT_EQ(out.disparities[2].shape(), (Shape{1, 1, 32, 104}));
  EXPECT_EQ(out.disparities[3].shape(), (Shape{1, 1, 16, 52}));
}

TEST(DispNet, InferenceIsDeterministicAndBatchIndependent) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_parameters(cfg, 3);
  std::mt19937_64 rng(3);
  Tensor a = random_tensor({1, 3, 16, 52}, rng, 0, 1, false);
  Tensor b = random_tensor({1, 3, 16, 52}, rng, 0, 1, false);
  const std::vector<Tensor> pair{b, a};
  const DispOutput alone = disp_net_forward(p, cfg, a, Mode::inference);
  const DispOutput again = disp_net_forward(p, cfg, a, Mode::inference);
  const DispOutput batched = disp_net_forward(p, cfg, stack_batch(pair), Mode::inference);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_TRUE(equal_values(alone.disparities[l], again.disparities[l]));
    const std::size_t n = alone.disparities[l].size();
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(batched.disparities[l].data()[n + i], alone.disparities[l].data()[i]);
  }
}

TEST(DispNet, TrainingModeUpdatesRunningStatistics) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_parameters(cfg, 4);
  std::mt19937_64 rng(4);
  disp_net_forward(p, cfg, random_tensor({2, 3, 16, 52}, rng, 0, 1, false), Mode::train);
  EXPECT_NE(p.at("disp.conv1.bn.running_mean").data()[0], 0.0);
  ParamStore q = init_parameters(cfg, 4);
  disp_net_forward(q, cfg, random_tensor({2, 3, 16, 52}, rng, 0, 1, false), Mode::inference);
  EXPECT_EQ(q.at("disp.conv1.bn.running_mean").data()[0], 0.0);
}

TEST(DispNet, RejectsWrongInputSize) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_parameters(cfg, 0);
  EXPECT_THROW(disp_net_forward(p, cfg, Tensor::zeros({1, 3, 16, 48}), Mode::inference), ShapeError);
}

TEST(PoseExpNet, ShapesAndInitialIdentity) {
  const ModelConfig cfg = small_config();
  ParamStore p = init_parameters(cfg, 5);
  std::mt19937_64 rng(5);
  Tensor t = random_tensor({2, 3, 16, 52}, rng, 0, 1, false);
  const std::vector<Tensor> src{random_tensor({2, 3, 16, 52}, rng, 0, 1, false),
                                random_tensor({2, 3, 16, 52}, rng, 0, 1, false)};
  for (Mode mode : {Mode::train, Mode::inference}) {
    const PoseExpOutput out = pose_exp_net_forward(p, cfg, t, src, mode);
    EXPECT_EQ(out.raw_pose.shape(), (Shape{2, 12}));
    ASSERT_EQ(out.poses.size(), 2u);
    for (const auto& pose : out.poses) {
      EXPECT_EQ(pose.shape(), (Shape{2, 6}));
      for (double v : pose.data()) EXPECT_EQ(v, 0.0);
    }
    ASSERT_EQ(out.mask_logits.size(), 4u);
    ASSERT_EQ(out.masks.size(), 4u);
    for (std::size_t l = 0; l < 4; ++l) {
      EXPECT_EQ(out.mask_logits[l].shape(), (Shape{2, 4, scaled_size(16, l), scaled_size(52, l)}));
      const Tensor probs = softmax_pairs(out.mask_logits[l]);
      const std::size_t hw = scaled_size(16, l) * scaled_size(52, l);
      for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_TRUE(probs.data()[i] >= 0 && probs.data()[i] <= 1);
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t s = 0; s < 2; ++s) {
          ASSERT_EQ(out.masks[l][s].shape(), (Shape{2, 1, scaled_size(16, l), scaled_size(52, l)}));
          for (std::size_t i = 0; i < hw; ++i) {
            const double a = probs.data()[(b * 4 + 2 * s) * hw + i], r = probs.data()[(b * 4 + 2 * s + 1) * hw + i];
            EXPECT_NEAR(a + r, 1.0, 1e-12);
            EXPECT_EQ(out.masks[l][s].data()[b * hw + i], r);
          }
        }
    }
  }
}

TEST(Parameters, SeedDeterminesInitialization) {
  const ModelConfig cfg = small_config();
  const ParamStore a = init_parameters(cfg, 11), b = init_parameters(cfg, 11), c = init_parameters(cfg, 12);
  ASSERT_EQ(a.entries().size(), b.entries().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    EXPECT_TRUE(equal_values(a.entries()[i].tensor, b.entries()[i].tensor));
    any_diff = any_diff || !equal_values(a.entries()[i].tensor, c.entries()[i].tensor);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Parameters, FanInScaling) {
  const ModelConfig cfg = small_config(32, 104, 8);
  const ParamStore p = init_parameters(cfg, 0);
  std::size_t checked = 0;
  for (const auto& e : p.entries()) {
    if (!e.name.ends_with(".weight") || e.tensor.size() < 2000) continue;
    const bool transpose = e.name.find("upconv") != std::string::npos || e.name.find("upcnv") != std::string::npos;
    const auto& s = e.tensor.shape();
    const double fan_in = double((transpose ? s[0] : s[1]) * s[2] * s[3]);
    double sq = 0;
    for (double v : e.tensor.data()) sq += v * v;
    const double std = std::sqrt(sq / double(e.tensor.size()));
    EXPECT_NEAR(std * std::sqrt(fan_in), 1.0, 0.1) << e.name;
    ++checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(Parameters, PoseHeadStartsAtZero) {
  const ParamStore p = init_parameters(small_config(), 7);
  for (double v : p.at("pose.pred.weight").data()) EXPECT_EQ(v, 0.0);
  for (double v : p.at("pose.pred.bias").data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.at("pose.pred.bias").size(), 12u);
}

TEST(Parameters, PredictionLayersHaveNoBatchNorm) {
  const ParamStore p = init_parameters(small_config(), 0);
  std::size_t heads = 0;
  for (const auto& e : p.entries()) {
    const bool head = e.name.find(".pred") != std::string::npos || e.name.find("pose.mask") != std::string::npos;
    if (!head) continue;
    ++heads;
    EXPECT_EQ(e.name.find(".bn."), std::string::npos) << e.name;
  }
  // 4 disparity heads and 4 mask heads with weight + bias each, plus the pose head.
  EXPECT_EQ(heads, 18u);
  EXPECT_TRUE(p.contains("disp.conv1.bn.gamma"));
}

TEST(Parameters, CountMatchesTheBuiltModel) {
  for (std::size_t c : {1, 2, 4, 8}) {
    for (std::size_t scales : {1, 2, 4}) {
      ModelConfig cfg = small_config(16, 52, c);
      cfg.disp.scales = cfg.pose.scales = scales;
      cfg.pose.base_channels = c + 1;
      std::size_t n = 0;
      for (const auto& t : init_parameters(cfg, 0).trainable()) n += t.size();
      EXPECT_EQ(parameter_count(cfg), n);
    }
  }
  // Default configuration: 8 base channels in both networks.
  EXPECT_EQ(parameter_count(ModelConfig{}), 1729952u);
}

TEST(Config, TextRoundTripAndValidation) {
  ModelConfig cfg = small_config(24, 64, 3);
  cfg.pose.translation_scale = 0.02;
  EXPECT_EQ(ModelConfig::from_text(cfg.to_text()), cfg);
  ModelConfig bad = cfg;
  bad.disp.height = bad.pose.height = 26;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.pose.sequence_length = 5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::from_text("height=abc\n"), ConfigError);
}

}  // namespace
}  // namespace ssvo
