#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ssvo/adam.hpp"
#include "ssvo/checkpoint.hpp"
#include "ssvo/errors.hpp"
#include "ssvo/ops.hpp"
#include "ssvo/params.hpp"
#include "test_util.hpp"

namespace ssvo {
namespace {

using test::numeric_gradient;
using test::random_tensor;
using test::relative_error;

TEST(Autodiff, SquareAtThree) {
  Tensor x = Tensor::scalar(3.0, true);
  mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Autodiff, SumGradientIsOnes) {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, ReusedNodeAccumulates) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = add(mul(x, x), scale(x, 3.0));  // x^2 + 3x
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Autodiff, UnreachedLeafGetsZeroGradient) {
  Tensor a = Tensor::scalar(1.5, true);
  Tensor b = Tensor::scalar(2.0, true);
  const std::vector<Tensor> leaves{a, b};
  const auto g = gradients(mul(a, a), leaves);
  EXPECT_DOUBLE_EQ(g[0][0], 3.0);
  EXPECT_EQ(g[1][0], 0.0);
}

TEST(Autodiff, ThreeLayerConvNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor x = random_tensor({2, 2, 7, 9}, rng, -1, 1, false);
    Tensor w1 = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor b1 = random_tensor({3}, rng);
    Tensor w2 = random_tensor({4, 3, 5, 5}, rng, -0.3, 0.3);
    Tensor w3 = random_tensor({1, 4, 3, 3}, rng, -0.5, 0.5);
    auto f = [&] {
      Tensor h = sigmoid(conv2d(x, w1, b1, 1));
      h = sigmoid(conv2d(h, w2, {}, 2));
      return sum(mul(conv2d(h, w3, {}, 1), conv2d(h, w3, {}, 1)));
    };
    f().backward();
    const std::vector<std::vector<double>> analytic{
        {w1.grad().begin(), w1.grad().end()},
        {b1.grad().begin(), b1.grad().end()},
        {w2.grad().begin(), w2.grad().end()},
        {w3.grad().begin(), w3.grad().end()}};
    const std::vector<Tensor*> leaves{&w1, &b1, &w2, &w3};
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      const auto numeric = numeric_gradient([&] { return f().item(); }, *leaves[i]);
      EXPECT_LT(relative_error(numeric, analytic[i]), 1e-4) << "seed " << seed << " leaf " << i;
    }
  }
}

TEST(Autodiff, BackwardIsBitwiseRepeatable) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({1, 3, 8, 8}, rng, 0, 1, false);
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  auto run = [&] {
    sum(sigmoid(conv2d(x, w, {}, 2))).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({1, 1, 5, 6}, rng);
  Tensor y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor::zeros({1}), 1);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesKernelCountsNeighbours) {
  Tensor y = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), {}, 1);
  const std::vector<double> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], expected[i]);
}

TEST(Conv2d, StrideTwoHalvesRoundingUp) {
  EXPECT_EQ(conv2d(Tensor::zeros({1, 1, 128, 8}), Tensor::zeros({2, 1, 3, 3}), {}, 2).shape(), (Shape{1, 2, 64, 4}));
  EXPECT_EQ(conv2d(Tensor::zeros({1, 1, 13, 7}), Tensor::zeros({1, 1, 5, 5}), {}, 2).shape(), (Shape{1, 1, 7, 4}));
}

TEST(Conv2d, RejectsMismatchedChannels) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 5, 5}), Tensor::zeros({1, 3, 3, 3}), {}, 1), ShapeError);
}

TEST(Conv2d, MatchesDirectSum) {
  std::mt19937_64 rng(3);
  const std::size_t C = 2, F = 3, H = 6, W = 7, K = 3, S = 2;
  Tensor x = random_tensor({1, C, H, W}, rng, -1, 1, false);
  Tensor w = random_tensor({F, C, K, K}, rng, -1, 1, false);
  Tensor b = random_tensor({F}, rng, -1, 1, false);
  Tensor y = conv2d(x, w, b, S);
  const std::size_t Ho = (H + S - 1) / S, Wo = (W + S - 1) / S;
  ASSERT_EQ(y.shape(), (Shape{1, F, Ho, Wo}));
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = b.data()[f];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj) {
              const long r = static_cast<long>(i * S + ki) - 1, q = static_cast<long>(j * S + kj) - 1;
              if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
              s += w.data()[((f * C + c) * K + ki) * K + kj] * x.data()[(c * H + r) * W + q];
            }
        EXPECT_NEAR(y.data()[(f * Ho + i) * Wo + j], s, 1e-12);
      }
}

TEST(ConvTranspose, IsAdjointOfConv) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t k = seed % 2 ? 3 : 5;
    Tensor w = random_tensor({4, 3, k, k}, rng, -1, 1, false);
    Tensor x = random_tensor({2, 3, 10, 14}, rng, -1, 1, false);
    Tensor y = random_tensor({2, 4, 5, 7}, rng, -1, 1, false);
    const double lhs = test::dot(conv2d(x, w, {}, 2).data(), y.data());
    const double rhs = test::dot(x.data(), conv2d_transpose(y, w, {}, 2).data());
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ConvTranspose, SinglePixelSpreadsKernel) {
  // A 1x1 map upsampled by 2 receives the lower-right 2x2 block of a 3x3
  // kernel (padding 1), scaled by the input value.
  Tensor w = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor y = conv2d_transpose(Tensor::full({1, 1, 1, 1}, 2.0), w, {}, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.data()[0], 10.0);
  EXPECT_EQ(y.data()[1], 12.0);
  EXPECT_EQ(y.data()[2], 16.0);
  EXPECT_EQ(y.data()[3], 18.0);
}

TEST(ConvTranspose, ShapeDoubles) {
  EXPECT_EQ(conv2d_transpose(Tensor::zeros({1, 4, 8, 26}), Tensor::zeros({4, 2, 3, 3}), {}, 2).shape(),
            (Shape{1, 2, 16, 52}));
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  Tensor x = Tensor::full({2, 1, 3, 3}, 4.2);
  std::vector<double> rm{0}, rv{1};
  Tensor y = batch_norm(x, Tensor::full({1}, 2.0), Tensor::full({1}, 0.7), rm, rv, true);
  for (double v : y.data()) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 2, 5, 5}, rng, -30, 40, false);
  std::vector<double> rm{0, 0}, rv{1, 1};
  Tensor y = batch_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), rm, rv, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0, xs = 0, xs2 = 0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = y.data()[(n * 2 + c) * 25 + i], u = x.data()[(n * 2 + c) * 25 + i];
        s += v;
        s2 += v * v;
        xs += u;
        xs2 += u * u;
      }
    EXPECT_NEAR(s / 75, 0.0, 1e-6);
    EXPECT_NEAR(s2 / 75, 1.0, 1e-6);
    const double mean = xs / 75, var = xs2 / 75 - mean * mean;
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-9);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * var * 75 / 74, 1e-9);
  }
}

TEST(BatchNorm, InferenceUsesRunningStatistics) {
  Tensor x = Tensor::from({1, 1, 1, 2}, {1.0, 3.0});
  std::vector<double> rm{2.0}, rv{4.0};
  Tensor y = batch_norm(x, Tensor::full({1}, 3.0), Tensor::full({1}, 1.0), rm, rv, false);
  const double s = 1.0 / std::sqrt(4.0 + 1e-5);
  EXPECT_NEAR(y.data()[0], 1.0 - 3.0 * s, 1e-12);
  EXPECT_NEAR(y.data()[1], 1.0 + 3.0 * s, 1e-12);
  EXPECT_EQ(rm[0], 2.0);
  EXPECT_EQ(rv[0], 4.0);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (bool training : {true, false}) {
      std::mt19937_64 rng(seed);
      Tensor x = random_tensor({2, 3, 3, 4}, rng);
      Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
      Tensor beta = random_tensor({3}, rng);
      Tensor weights = random_tensor({2, 3, 3, 4}, rng, -1, 1, false);
      auto f = [&] {
        std::vector<double> rm{0.1, -0.2, 0.3}, rv{1.1, 0.8, 1.4};
        return sum(mul(batch_norm(x, gamma, beta, rm, rv, training), weights));
      };
      f().backward();
      for (Tensor* leaf : {&x, &gamma, &beta}) {
        const std::vector<double> analytic(leaf->grad().begin(), leaf->grad().end());
        EXPECT_LT(relative_error(numeric_gradient([&] { return f().item(); }, *leaf), analytic), 1e-4)
            << "seed " << seed << " training " << training;
      }
    }
  }
}

TEST(Activations, Values) {
  Tensor x = Tensor::from({3}, {-2.0, 3.0, 0.0}, true);
  EXPECT_EQ(relu(x).data()[0], 0.0);
  EXPECT_EQ(relu(x).data()[1], 3.0);
  EXPECT_EQ(sigmoid(x).data()[2], 0.5);
  sum(sigmoid(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.25);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Activations, SigmoidSaturatesWithoutNan) {
  Tensor y = sigmoid(Tensor::from({2}, {-1e6, 1e6}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 1.0);
}

TEST(SoftmaxPairs, Values) {
  Tensor y = softmax_pairs(Tensor::from({1, 6, 1, 1}, {0, 0, 1000, 1000, 2, 0}));
  EXPECT_EQ(y.data()[0], 0.5);
  EXPECT_EQ(y.data()[1], 0.5);
  EXPECT_EQ(y.data()[2], 0.5);
  EXPECT_EQ(y.data()[3], 0.5);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(y.data()[4], e2 / (e2 + 1), 1e-15);
  EXPECT_NEAR(y.data()[4], 0.8808, 1e-4);
  EXPECT_NEAR(y.data()[5], 0.1192, 1e-4);
}

TEST(SoftmaxPairs, PairsSumToOne) {
  std::mt19937_64 rng(6);
  Tensor y = softmax_pairs(random_tensor({2, 4, 5, 6}, rng, -50, 50, false));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t i = 0; i < 30; ++i) {
        const double a = y.data()[(n * 4 + 2 * p) * 30 + i], b = y.data()[(n * 4 + 2 * p + 1) * 30 + i];
        EXPECT_NEAR(a + b, 1.0, 1e-12);
      }
}

TEST(FiniteChecks, NanRaisesNumericalError) {
  set_finite_checks(true);
  EXPECT_THROW(log(Tensor::scalar(-1.0)), NumericalError);
  set_finite_checks(false);
  EXPECT_NO_THROW(log(Tensor::scalar(-1.0)));
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::from({2}, {1.0, -2.0}, true);
  std::vector<Tensor> params{p};
  AdamState s;
  adam_step(params, std::vector<std::vector<double>>{{0.5, -0.5}}, s);
  const double m = s.first_moment[0][0], v = s.second_moment[0][0];
  adam_step(params, std::vector<std::vector<double>>{{0.0, 0.0}}, s);
  EXPECT_NEAR(s.first_moment[0][0], 0.9 * m, 1e-18);
  EXPECT_NEAR(s.second_moment[0][0], 0.999 * v, 1e-18);
  // With a zero gradient the moments are nonzero, so only a gradient that has
  // always been zero is a true fixed point.
  Tensor q = Tensor::from({1}, {3.0}, true);
  std::vector<Tensor> qs{q};
  AdamState t;
  for (int i = 0; i < 5; ++i) adam_step(qs, std::vector<std::vector<double>>{{0.0}}, t);
  EXPECT_EQ(q.data()[0], 3.0);
  EXPECT_EQ(t.first_moment[0][0], 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.7, -25.0}) {
    Tensor p = Tensor::scalar(1.0, true);
    std::vector<Tensor> params{p};
    AdamState s;
    s.learning_rate = 0.01;
    adam_step(params, std::vector<std::vector<double>>{{g}}, s);
    // m_hat / (sqrt(v_hat) + eps) = g / (|g| + eps)
    EXPECT_NEAR(p.data()[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Adam, MatchesScalarReference) {
  const std::vector<double> grads{0.3, 0.3, -0.1, 2.0};
  double x = 0.5, m = 0, v = 0;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p = Tensor::scalar(0.5, true);
  std::vector<Tensor> params{p};
  AdamState s;
  s.learning_rate = lr;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    m = b1 * m + (1 - b1) * grads[k];
    v = b2 * v + (1 - b2) * grads[k] * grads[k];
    const double mh = m / (1 - std::pow(b1, double(k + 1))), vh = v / (1 - std::pow(b2, double(k + 1)));
    x -= lr * mh / (std::sqrt(vh) + eps);
    adam_step(params, std::vector<std::vector<double>>{{grads[k]}}, s);
    EXPECT_NEAR(p.data()[0], x, 1e-15) << "step " << k;
  }
  EXPECT_EQ(s.step_count, grads.size());
}

TEST(Adam, DefaultRateIsConservative) {
  EXPECT_EQ(AdamState{}.learning_rate, 1e-4);
  EXPECT_EQ(AdamState::kLiteralLearningRate, 0.1);
}

TEST(Checkpoint, RoundTripsParametersAndOptimizer) {
  std::mt19937_64 rng(8);
  Checkpoint ck;
  ck.config_text = "a=1\nb=2\n";
  ck.params.add("w", random_tensor({2, 3}, rng), true);
  ck.params.add("stats", random_tensor({3}, rng, -1, 1, false), false);
  AdamState s;
  s.step_count = 7;
  s.first_moment = {{1, 2, 3, 4, 5, 6}};
  s.second_moment = {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
  ck.adam = s;
  const auto path = std::filesystem::temp_directory_path() / "ssvo_ck_roundtrip.ssvo";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.config_text, ck.config_text);
  ASSERT_EQ(back.params.entries().size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = ck.params.entries()[i];
    const auto& b = back.params.entries()[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.tensor.shape(), b.tensor.shape());
    EXPECT_TRUE(std::equal(a.tensor.data().begin(), a.tensor.data().end(), b.tensor.data().begin()));
  }
  ASSERT_TRUE(back.adam.has_value());
  EXPECT_EQ(back.adam->step_count, 7u);
  EXPECT_EQ(back.adam->first_moment, s.first_moment);
  EXPECT_EQ(back.adam->second_moment, s.second_moment);

  // Trainability comes from the model the values are assigned onto.
  ParamStore fresh;
  fresh.add("w", Tensor::zeros({2, 3}, true), true);
  fresh.add("stats", Tensor::zeros({3}), false);
  assign_params(fresh, back.params);
  EXPECT_TRUE(fresh.entries()[0].trainable);
  EXPECT_EQ(fresh.at("w").data()[4], ck.params.at("w").data()[4]);
  ParamStore wrong;
  wrong.add("w", Tensor::zeros({3, 2}, true), true);
  EXPECT_ANY_THROW(assign_params(wrong, back.params));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "ssvo_ck_garbage.ssvo";
  std::ofstream(path) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(path), IoError);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), IoError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, Sha256KnownVector) {
  const auto path = std::filesystem::temp_directory_path() / "ssvo_sha.txt";
  std::ofstream(path, std::ios::binary) << "abc";
  EXPECT_EQ(file_sha256(path), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::filesystem::remove(path);
}

TEST(ParamStore, CloneIsDeep) {
  ParamStore a;
  a.add("x", Tensor::from({2}, {1, 2}, true), true);
  ParamStore b = a.clone();
  b.at("x").mutable_data()[0] = 9;
  EXPECT_EQ(a.at("x").data()[0], 1.0);
  EXPECT_EQ(a.trainable_count(), 2u);
  EXPECT_THROW(a.add("x", Tensor::zeros({1}), true), ConfigError);
}

}  // namespace
}  // namespace ssvo
