#include "ssvo/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "ssvo/errors.hpp"
#include "ssvo/geometry.hpp"
#include "ssvo/losses.hpp"
#include "ssvo/models.hpp"
#include "ssvo/ops.hpp"
#include "ssvo/synth.hpp"
#include "ssvo/trainer.hpp"
#include "ssvo/warp.hpp"

namespace ssvo {

double gradient_error(const std::function<Tensor()>& f, std::span<Tensor> leaves, std::span<const Probe> probes,
                      double step) {
  const auto analytic_all = gradients(f(), leaves);
  double diff = 0, norm_a = 0, norm_n = 0;
  for (const Probe& p : probes) {
    auto values = leaves[p.leaf].mutable_data();
    const double saved = values[p.index];
    values[p.index] = saved + step;
    const double up = f().item();
    values[p.index] = saved - step;
    const double down = f().item();
    values[p.index] = saved;
    const double numeric = (up - down) / (2 * step);
    const double analytic = analytic_all[p.leaf][p.index];
    diff += (analytic - numeric) * (analytic - numeric);
    norm_a += analytic * analytic;
    norm_n += numeric * numeric;
  }
  diff = std::sqrt(diff);
  const double scale = std::max(std::sqrt(norm_a), std::sqrt(norm_n));
  return scale < 1e-10 ? diff : diff / scale;
}

std::vector<Probe> all_probes(std::span<const Tensor> leaves) {
  std::vector<Probe> out;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t i = 0; i < leaves[l].size(); ++i) out.push_back({l, i});
  }
  return out;
}

namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kCompositeTolerance = 1e-3;

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  std::mt19937_64 engine;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  Tensor leaf(Shape shape, double lo = -1, double hi = 1) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v), true);
  }
  Tensor constant(Shape shape, double lo = -1, double hi = 1) { return leaf(std::move(shape), lo, hi).detach(); }
};

using CaseFn = std::function<double(Rng&)>;

double check_all(std::vector<Tensor> leaves, const std::function<Tensor()>& f) {
  const auto probes = all_probes(leaves);
  return gradient_error(f, leaves, probes);
}

// Coordinates whose fractional part stays clear of the integer lattice, where
// bilinear interpolation has kinks.
double off_lattice(Rng& rng, double lo, double hi) {
  for (;;) {
    const double v = rng.uniform(lo, hi);
    const double frac = v - std::floor(v);
    if (frac > 0.02 && frac < 0.98) return v;
  }
}

Tensor pose_leaf(Rng& rng, std::size_t n) {
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) v.push_back(rng.uniform(-0.05, 0.05));
    for (int j = 0; j < 3; ++j) v.push_back(rng.uniform(-0.05, 0.05));
  }
  return Tensor::from({n, 6}, std::move(v), true);
}

std::vector<std::pair<std::string, CaseFn>> op_cases() {
  std::vector<std::pair<std::string, CaseFn>> cases;
  cases.emplace_back("conv2d k3 s1", [](Rng& r) {
    Tensor x = r.leaf({2, 3, 6, 7}), w = r.leaf({4, 3, 3, 3}), b = r.leaf({4});
    Tensor c = r.constant({2, 4, 6, 7});
    return check_all({x, w, b}, [&] { return sum(mul(conv2d(x, w, b, 1), c)); });
  });
  cases.emplace_back("conv2d k5 s2", [](Rng& r) {
    Tensor x = r.leaf({2, 2, 7, 9}), w = r.leaf({3, 2, 5, 5}), b = r.leaf({3});
    Tensor c = r.constant({2, 3, 4, 5});
    return check_all({x, w, b}, [&] { return sum(mul(conv2d(x, w, b, 2), c)); });
  });
  cases.emplace_back("conv2d_transpose k3 s2", [](Rng& r) {
    Tensor x = r.leaf({2, 3, 3, 4}), w = r.leaf({3, 2, 3, 3}), b = r.leaf({2});
    Tensor c = r.constant({2, 2, 6, 8});
    return check_all({x, w, b}, [&] { return sum(mul(conv2d_transpose(x, w, b, 2), c)); });
  });
  cases.emplace_back("batch_norm train", [](Rng& r) {
    Tensor x = r.leaf({3, 2, 3, 4}), g = r.leaf({2}, 0.5, 1.5), b = r.leaf({2});
    Tensor c = r.constant({3, 2, 3, 4});
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    return check_all({x, g, b}, [&] { return sum(mul(batch_norm(x, g, b, rm, rv, true), c)); });
  });
  cases.emplace_back("batch_norm inference", [](Rng& r) {
    Tensor x = r.leaf({2, 2, 3, 3}), g = r.leaf({2}, 0.5, 1.5), b = r.leaf({2});
    Tensor c = r.constant({2, 2, 3, 3});
    std::vector<double> rm{0.3, -0.2}, rv{0.7, 1.4};
    return check_all({x, g, b}, [&] { return sum(mul(batch_norm(x, g, b, rm, rv, false), c)); });
  });
  cases.emplace_back("relu", [](Rng& r) {
    Tensor x = r.leaf({2, 3, 4, 4});
    for (auto& v : x.mutable_data()) {
      if (std::abs(v) < 1e-3) v += 0.01;
    }
    Tensor c = r.constant({2, 3, 4, 4});
    return check_all({x}, [&] { return sum(mul(relu(x), c)); });
  });
  cases.emplace_back("sigmoid", [](Rng& r) {
    Tensor x = r.leaf({2, 3, 4, 4}, -4, 4);
    Tensor c = r.constant({2, 3, 4, 4});
    return check_all({x}, [&] { return sum(mul(sigmoid(x), c)); });
  });
  cases.emplace_back("softmax_pairs", [](Rng& r) {
    Tensor x = r.leaf({2, 4, 3, 3}, -3, 3);
    Tensor c = r.constant({2, 4, 3, 3});
    return check_all({x}, [&] { return sum(mul(softmax_pairs(x), c)); });
  });
  cases.emplace_back("elementwise", [](Rng& r) {
    Tensor a = r.leaf({3, 4}, 0.5, 2), b = r.leaf({3, 4}, -2, -0.5);
    Tensor c = r.constant({3, 4});
    return check_all({a, b}, [&] {
      const Tensor t = add(mul(a, b), sub(reciprocal(a), scale(log(a), 0.7)));
      return add(sum(mul(abs(add_scalar(t, 0.0)), c)), mean(mul(b, b)));
    });
  });
  cases.emplace_back("reshaping", [](Rng& r) {
    Tensor x = r.leaf({2, 3, 5, 7}), y = r.leaf({2, 2, 5, 7});
    const std::array<Tensor, 2> parts{x, y};
    Tensor c1 = r.constant({2, 3, 4, 6}), c2 = r.constant({2, 5});
    return check_all({x, y}, [&] {
      const Tensor cat = concat_channels(parts);
      const Tensor s = slice_channels(cat, 1, 3);
      const Tensor down = downsample_average(s);
      const Tensor up = upsample_nearest(down, 5, 7);
      const Tensor cropped = crop(up, 4, 6);
      return add(sum(mul(cropped, c1)), sum(mul(global_average_pool(cat), c2)));
    });
  });
  cases.emplace_back("bilinear_sample", [](Rng& r) {
    Tensor src = r.leaf({2, 2, 5, 6});
    std::vector<double> coords;
    for (int i = 0; i < 2 * 3 * 4; ++i) {
      coords.push_back(off_lattice(r, -0.5, 5.5));  // some points fall outside and must get no gradient
      coords.push_back(off_lattice(r, -0.5, 4.5));
    }
    Tensor grid = Tensor::from({2, 3, 4, 2}, coords, true);
    Tensor c = r.constant({2, 2, 3, 4});
    return check_all({src, grid}, [&] { return sum(mul(bilinear_sample(src, grid).values, c)); });
  });
  cases.emplace_back("pose_vec_to_matrix", [](Rng& r) {
    Tensor p = r.leaf({3, 6}, -1.2, 1.2);
    Tensor c = r.constant({3, 12});
    return check_all({p}, [&] { return sum(mul(pose_vec_to_matrix(p), c)); });
  });
  cases.emplace_back("batch_project", [](Rng& r) {
    Tensor depth = r.leaf({2, 1, 4, 5}, 0.8, 1.5);
    Tensor pose = pose_leaf(r, 2);
    const CameraIntrinsics k{4.0, 4.5, 2.1, 1.4};
    Tensor c = r.constant({2, 4, 5, 2});
    return check_all({depth, pose}, [&] {
      return sum(mul(batch_project(depth, pose_vec_to_matrix(pose), k).coords, c));
    });
  });
  cases.emplace_back("photometric_term", [](Rng& r) {
    // Hand-built warp: every pixel valid, synthesized view is a leaf.
    Tensor target = r.constant({2, 3, 4, 5}, 0, 1);
    Tensor synth = r.leaf({2, 3, 4, 5}, 0, 1);
    Tensor mask = r.leaf({2, 1, 4, 5}, 0.1, 0.9);
    for (std::size_t i = 0; i < synth.size(); ++i) {
      if (std::abs(synth.data()[i] - target.data()[i]) < 1e-3) synth.mutable_data()[i] += 0.01;
    }
    return check_all({synth, mask}, [&] {
      WarpResult w{synth, std::vector<std::uint8_t>(2 * 4 * 5, 1), Tensor{}};
      w.valid[3] = 0;
      return photometric_term(target, w, mask);
    });
  });
  cases.emplace_back("smoothness_loss", [](Rng& r) {
    Tensor d = r.leaf({2, 1, 5, 6}, 0.2, 2.0);
    return check_all({d}, [&] { return smoothness_loss(d); });
  });
  cases.emplace_back("mask_regularization", [](Rng& r) {
    Tensor logits = r.leaf({2, 4, 3, 4}, -3, 3);
    return check_all({logits}, [&] { return mask_regularization(logits); });
  });
  cases.emplace_back("inverse_warp", [](Rng& r) {
    Tensor src = r.leaf({1, 2, 6, 8}, 0, 1);
    Tensor depth, pose;
    const CameraIntrinsics k{6.0, 6.0, 3.5, 2.5};
    // Redraw until no projected point sits on a bilinear cell boundary.
    for (bool clear = false; !clear;) {
      depth = r.leaf({1, 1, 6, 8}, 1.0, 1.4);
      pose = pose_leaf(r, 1);
      const ProjectedGrid grid = batch_project(depth, pose_vec_to_matrix(pose), k);
      const auto xy = grid.coords.data();
      clear = std::all_of(xy.begin(), xy.end(), [](double v) {
        const double frac = v - std::floor(v);
        return frac > 0.002 && frac < 0.998;
      });
    }
    Tensor c = r.constant({1, 2, 6, 8});
    return check_all({src, depth, pose}, [&] { return sum(mul(inverse_warp(src, depth, pose, k).synthesized, c)); });
  });
  cases.emplace_back("total_loss", [](Rng& r) {
    std::vector<Tensor> leaves;
    for (int i = 0; i < 6; ++i) leaves.push_back(r.leaf({1}, 0.1, 1.0));
    const std::vector<double> lambda_s = default_smoothness_weights(2);
    return check_all(leaves, [&] {
      std::vector<ScaleTerms> terms;
      for (std::size_t s = 0; s < 2; ++s) {
        terms.push_back({reshape(leaves[3 * s], {}), reshape(leaves[3 * s + 1], {}), reshape(leaves[3 * s + 2], {})});
      }
      return total_loss(terms, lambda_s, kDefaultMaskWeight).total;
    });
  });
  return cases;
}

// Full objective on a 16x52 model with rendered frames and perturbed,
// non-trivial pose predictions; ten random parameter coordinates per seed.
// ReLU, |.| and bilinear cell boundaries are dense in this function, so the
// difference step is kept well below their typical spacing.
constexpr double kCompositeStep = 1e-7;

double end_to_end_case(Rng& r, std::uint64_t seed) {
  ModelConfig model;
  model.disp.height = model.pose.height = 16;
  model.disp.width = model.pose.width = 52;
  model.disp.base_channels = model.pose.base_channels = 2;
  ParamStore params = init_parameters(model, seed);
  for (auto& v : params.at("pose.pred.weight").mutable_data()) v = r.uniform(-0.5, 0.5);

  const SceneSpec scene = random_scene(seed);
  TrajectorySpec ts;
  ts.frames = 4;
  ts.seed = seed;
  const auto traj = random_trajectory(ts);
  const CameraIntrinsics k = default_intrinsics(16, 52);
  const SyntheticSequence seq = generate_dataset(scene, traj, k, 16, 52);
  Dataset ds;
  ds.intrinsics = k;
  ds.height = 16;
  ds.width = 52;
  for (const auto& f : seq.frames) ds.frames.push_back(f.image);
  ds.triplets = {{0, 1, 2}, {1, 2, 3}};
  const PyramidCache pyramids(ds, model.disp.scales);
  const std::array<std::size_t, 2> idx{0, 1};
  const TripletBatch batch = pyramids.batch(ds, idx);
  const auto lambda_s = default_smoothness_weights(model.disp.scales);

  std::vector<Tensor> leaves = params.trainable();
  const auto objective = [&] {
    return evaluate_objective(params, model, batch, k, lambda_s, kDefaultMaskWeight, Mode::train).loss.total;
  };
  const double base = objective().item();
  std::vector<Probe> probes;
  while (probes.size() < 10) {
    const auto leaf = std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(r.engine);
    const auto index = std::uniform_int_distribution<std::size_t>(0, leaves[leaf].size() - 1)(r.engine);
    // A coordinate whose one-sided slopes disagree sits on a kink; the
    // derivative does not exist there, so draw another.
    auto values = leaves[leaf].mutable_data();
    const double saved = values[index];
    values[index] = saved + kCompositeStep;
    const double right = (objective().item() - base) / kCompositeStep;
    values[index] = saved - kCompositeStep;
    const double left = (base - objective().item()) / kCompositeStep;
    values[index] = saved;
    if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), 1e-6})) continue;
    probes.push_back({leaf, index});
  }
  return gradient_error(objective, leaves, probes, kCompositeStep);
}

}  // namespace

std::vector<GradCheckCase> run_gradient_suite(std::size_t seeds, std::uint64_t base_seed) {
  if (seeds == 0) throw ConfigError("gradient suite needs at least one seed");
  std::vector<GradCheckCase> out;
  for (const auto& [name, fn] : op_cases()) {
    GradCheckCase c{name, kOpTolerance, 0.0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(base_seed * 7919 + s + 1);
      c.max_error = std::max(c.max_error, fn(rng));
    }
    out.push_back(c);
  }
  GradCheckCase e2e{"end-to-end objective", kCompositeTolerance, 0.0, seeds};
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(base_seed * 7919 + s + 1);
    e2e.max_error = std::max(e2e.max_error, end_to_end_case(rng, base_seed * 7919 + s + 1));
  }
  out.push_back(e2e);
  return out;
}

}  // namespace ssvo
