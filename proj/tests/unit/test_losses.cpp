#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "ssvo/errors.hpp"
#include "ssvo/losses.hpp"
#include "ssvo/ops.hpp"
#include "test_util.hpp"

namespace ssvo {
namespace {

using test::random_tensor;

WarpResult fake_warp(const Tensor& synthesized, std::vector<std::uint8_t> valid) {
  WarpResult w;
  w.synthesized = synthesized;
  w.valid = std::move(valid);
  return w;
}

WarpResult all_valid(const Tensor& synthesized) {
  return fake_warp(synthesized, std::vector<std::uint8_t>(
                                    synthesized.dim(0) * synthesized.dim(2) * synthesized.dim(3), 1));
}

TEST(Photometric, ZeroWhenReconstructionIsPerfect) {
  std::mt19937_64 rng(1);
  Tensor t = random_tensor({2, 3, 4, 5}, rng, 0, 1, false);
  EXPECT_EQ(photometric_term(t, all_valid(t)).item(), 0.0);
}

TEST(Photometric, ZeroMaskGivesZero) {
  std::mt19937_64 rng(2);
  Tensor t = random_tensor({2, 3, 4, 5}, rng, 0, 1, false);
  Tensor s = random_tensor({2, 3, 4, 5}, rng, 0, 1, false);
  EXPECT_EQ(photometric_term(t, all_valid(s), Tensor::zeros({2, 1, 4, 5})).item(), 0.0);
}

TEST(Photometric, HandComputedMean) {
  const double v = photometric_term(Tensor::full({1, 3, 4, 6}, 1.0), all_valid(Tensor::full({1, 3, 4, 6}, 0.75)),
                                    Tensor::full({1, 1, 4, 6}, 1.0))
                       .item();
  EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Photometric, InvalidPixelsAreExcludedFromTheMean) {
  Tensor t = Tensor::from({1, 1, 1, 4}, {1, 1, 1, 1});
  Tensor s = Tensor::from({1, 1, 1, 4}, {0.5, 0.9, 0, 0});
  EXPECT_DOUBLE_EQ(photometric_term(t, fake_warp(s, {1, 1, 0, 0})).item(), (0.5 + 0.1) / 2);
  EXPECT_THROW(photometric_term(t, fake_warp(s, {0, 0, 0, 0})), NoValidPixels);
}

TEST(Photometric, UnitMaskEqualsUnmaskedExactly) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor t = random_tensor({2, 3, 5, 7}, rng, 0, 1, false);
    std::vector<std::uint8_t> valid(70);
    for (auto& v : valid) v = rng() % 5 != 0;
    const std::vector<WarpResult> w{fake_warp(random_tensor({2, 3, 5, 7}, rng, 0, 1, false), valid),
                                    fake_warp(random_tensor({2, 3, 5, 7}, rng, 0, 1, false), valid)};
    const std::vector<Tensor> ones{Tensor::full({2, 1, 5, 7}, 1.0), Tensor::full({2, 1, 5, 7}, 1.0)};
    EXPECT_EQ(photometric_loss(t, w, ones).item(), photometric_loss(t, w).item());
  }
}

TEST(Photometric, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor t = random_tensor({1, 3, 4, 5}, rng, 0, 1, false);
    Tensor s = random_tensor({1, 3, 4, 5}, rng, 0, 1);
    Tensor m = random_tensor({1, 1, 4, 5}, rng, 0, 1);
    auto f = [&] { return photometric_term(t, all_valid(s), m); };
    f().backward();
    for (Tensor* leaf : {&s, &m}) {
      const std::vector<double> analytic(leaf->grad().begin(), leaf->grad().end());
      EXPECT_LT(test::relative_error(test::numeric_gradient([&] { return f().item(); }, *leaf), analytic), 1e-4);
    }
  }
}

TEST(Smoothness, ConstantAndAffineMapsAreFree) {
  EXPECT_EQ(smoothness_loss(Tensor::full({2, 1, 5, 6}, 3.7)).item(), 0.0);
  std::vector<double> ramp(5 * 6);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x) ramp[y * 6 + x] = 3.0 * x - 2.0 * y + 7.0;
  EXPECT_EQ(smoothness_loss(Tensor::from({1, 1, 5, 6}, ramp)).item(), 0.0);
}

TEST(Smoothness, SpikeHitsCountableStencils) {
  const std::size_t H = 7, W = 9;
  const double h = 0.3;
  std::vector<double> d(H * W, 1.0);
  d[3 * W + 4] += h;
  // Each of the three operators touches the spike with total weight 4.
  const double expected = 4 * h / (H * (W - 2)) + 4 * h / ((H - 2) * W) + 4 * h / ((H - 1) * (W - 1));
  EXPECT_NEAR(smoothness_loss(Tensor::from({1, 1, H, W}, d)).item(), expected, 1e-15);
  d[3 * W + 4] = 1.0 + 2 * h;
  EXPECT_NEAR(smoothness_loss(Tensor::from({1, 1, H, W}, d)).item(), 2 * expected, 1e-15);
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor d = random_tensor({2, 1, 4, 5}, rng, 0, 1);
    smoothness_loss(d).backward();
    const std::vector<double> analytic(d.grad().begin(), d.grad().end());
    EXPECT_LT(test::relative_error(test::numeric_gradient([&] { return smoothness_loss(d).item(); }, d), analytic),
              1e-4);
  }
}

TEST(MaskRegularization, Values) {
  EXPECT_NEAR(mask_regularization(Tensor::zeros({1, 2, 3, 3})).item(), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(mask_regularization(Tensor::zeros({2, 4, 3, 3})).item(), 2 * std::numbers::ln2, 1e-13);
  Tensor confident = Tensor::zeros({1, 2, 2, 2});
  for (std::size_t i = 4; i < 8; ++i) confident.mutable_data()[i] = 40.0;
  EXPECT_LT(mask_regularization(confident).item(), 1e-15);
}

TEST(MaskRegularization, DecreasesWithReliableLogit) {
  double previous = std::numeric_limits<double>::infinity();
  for (double z = -20; z <= 20; z += 0.5) {
    const double v = mask_regularization(Tensor::from({1, 2, 1, 1}, {0.3, z})).item();
    EXPECT_LT(v, previous);
    previous = v;
  }
}

TEST(MaskRegularization, ZeroMaskMaximizesIt) {
  // Logits pushing the reliable probability to zero make the regularizer
  // large while the masked photometric term vanishes.
  Tensor logits = Tensor::zeros({1, 2, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) logits.mutable_data()[i] = 30.0;
  const std::vector<Tensor> masks = reliability_masks(logits);
  ASSERT_EQ(masks.size(), 1u);
  for (double m : masks[0].data()) EXPECT_LT(m, 1e-12);
  EXPECT_NEAR(mask_regularization(logits).item(), 30.0, 1e-9);
  std::mt19937_64 rng(3);
  Tensor t = random_tensor({1, 3, 3, 3}, rng, 0, 1, false);
  Tensor s = random_tensor({1, 3, 3, 3}, rng, 0, 1, false);
  EXPECT_LT(photometric_term(t, all_valid(s), masks[0]).item(), 1e-12);
}

TEST(MaskRegularization, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor z = random_tensor({2, 4, 3, 3}, rng, -3, 3);
    mask_regularization(z).backward();
    const std::vector<double> analytic(z.grad().begin(), z.grad().end());
    EXPECT_LT(
        test::relative_error(test::numeric_gradient([&] { return mask_regularization(z).item(); }, z), analytic),
        1e-4);
  }
}

std::vector<ScaleTerms> random_terms(std::mt19937_64& rng, std::size_t scales) {
  std::uniform_real_distribution<double> d(0, 3);
  std::vector<ScaleTerms> t(scales);
  for (auto& s : t) s = {Tensor::scalar(d(rng), true), Tensor::scalar(d(rng), true), Tensor::scalar(d(rng), true)};
  return t;
}

TEST(TotalLoss, ZeroWeightsKeepOnlyPhotometric) {
  std::mt19937_64 rng(4);
  const auto terms = random_terms(rng, 4);
  const std::vector<double> zeros(4, 0.0);
  const LossBreakdown b = total_loss(terms, zeros, 0.0);
  double vs = 0;
  for (const auto& s : terms) vs += s.vs.item();
  EXPECT_NEAR(b.total.item(), vs, 1e-15);
}

TEST(TotalLoss, AllZeroIsZero) {
  std::vector<ScaleTerms> terms(3, {Tensor::scalar(0), Tensor::scalar(0), Tensor::scalar(0)});
  EXPECT_EQ(total_loss(terms, default_smoothness_weights(3), kDefaultMaskWeight).total.item(), 0.0);
}

TEST(TotalLoss, RecompositionAndWeights) {
  EXPECT_EQ(default_smoothness_weights(4), (std::vector<double>{0.5, 0.25, 0.125, 0.0625}));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto terms = random_terms(rng, 4);
    const auto ls = default_smoothness_weights(4);
    const LossBreakdown b = total_loss(terms, ls, 0.2);
    double direct = 0;
    for (std::size_t l = 0; l < 4; ++l) direct += terms[l].vs.item() + ls[l] * terms[l].smooth.item() + 0.2 * terms[l].reg.item();
    EXPECT_NEAR(b.total.item(), direct, 1e-10);
    EXPECT_NEAR(b.recompose(), b.total.item(), 1e-10);
    EXPECT_GE(b.total.item(), 0.0);
    b.total.backward();
    EXPECT_EQ(terms[2].smooth.grad()[0], ls[2]);
    EXPECT_EQ(terms[1].reg.grad()[0], 0.2);
    EXPECT_EQ(terms[3].vs.grad()[0], 1.0);
  }
}

TEST(TotalLoss, NonFiniteComponentIsReported) {
  std::mt19937_64 rng(5);
  auto terms = random_terms(rng, 2);
  terms[1].smooth = Tensor::scalar(std::nan(""));
  try {
    total_loss(terms, default_smoothness_weights(2), 0.2);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("smooth"), std::string::npos);
  }
}

}  // namespace
}  // namespace ssvo
