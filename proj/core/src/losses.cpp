#include "ssvo/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/ops.hpp"

namespace ssvo {

Tensor photometric_term(const Tensor& target, const WarpResult& warped, const Tensor& mask) {
  const Tensor& synth = warped.synthesized;
  if (target.shape() != synth.shape() || target.rank() != 4) {
    throw ShapeError(fmt::format("photometric_term: target {} vs synthesized {}", to_string(target.shape()),
                                 to_string(synth.shape())));
  }
  const std::size_t n = target.dim(0), c = target.dim(1), hw = target.dim(2) * target.dim(3);
  if (warped.valid.size() != n * hw) throw ShapeError("photometric_term: validity mask has the wrong size");
  if (mask.defined() && mask.shape() != Shape{n, 1, target.dim(2), target.dim(3)}) {
    throw ShapeError(fmt::format("photometric_term: mask must be [N,1,H,W], got {}", to_string(mask.shape())));
  }
  const std::size_t count = warped.valid_count();
  if (count == 0) throw NoValidPixels("photometric_term: no valid pixel in the warped view");
  const double norm = 1.0 / static_cast<double>(count * c);

  auto t = target.data();
  auto s = synth.data();
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      if (!warped.valid[b * hw + p]) continue;
      const double m = mask.defined() ? mask.data()[b * hw + p] : 1.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (b * c + ch) * hw + p;
        total += m * std::abs(t[i] - s[i]);
      }
    }
  }
  std::vector<Tensor> inputs{target, synth};
  if (mask.defined()) inputs.push_back(mask);
  return Tensor::make({}, {total * norm}, std::move(inputs), [n, c, hw, norm, valid = warped.valid](detail::Node& self) {
    auto& tn = *self.inputs[0];
    auto& sn = *self.inputs[1];
    detail::Node* mn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const double g = self.grad[0] * norm;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        if (!valid[b * hw + p]) continue;
        const double m = mn ? mn->value[b * hw + p] : 1.0;
        double abs_sum = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t i = (b * c + ch) * hw + p;
          const double r = tn.value[i] - sn.value[i];
          abs_sum += std::abs(r);
          const double sign = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
          if (tn.requires_grad) tn.grad_buffer()[i] += g * m * sign;
          if (sn.requires_grad) sn.grad_buffer()[i] -= g * m * sign;
        }
        if (mn && mn->requires_grad) mn->grad_buffer()[b * hw + p] += g * abs_sum;
      }
    }
  });
}

Tensor photometric_loss(const Tensor& target, std::span<const WarpResult> warped, std::span<const Tensor> masks) {
  if (!masks.empty() && masks.size() != warped.size()) {
    throw ShapeError(fmt::format("photometric_loss: {} masks for {} sources", masks.size(), warped.size()));
  }
  std::vector<Tensor> terms;
  for (std::size_t s = 0; s < warped.size(); ++s) {
    terms.push_back(photometric_term(target, warped[s], masks.empty() ? Tensor{} : masks[s]));
  }
  return sum_scalars(terms);
}

Tensor smoothness_loss(const Tensor& disparity) {
  if (disparity.rank() != 4 || disparity.dim(1) != 1) {
    throw ShapeError(fmt::format("smoothness_loss: expected [N,1,H,W], got {}", to_string(disparity.shape())));
  }
  const std::size_t n = disparity.dim(0), h = disparity.dim(2), w = disparity.dim(3);
  if (h < 3 || w < 3) throw ShapeError(fmt::format("smoothness_loss: needs H, W >= 3, got {}x{}", h, w));
  const double nxx = 1.0 / static_cast<double>(n * h * (w - 2));
  const double nyy = 1.0 / static_cast<double>(n * (h - 2) * w);
  const double nxy = 1.0 / static_cast<double>(n * (h - 1) * (w - 1));
  auto d = disparity.data();
  auto at = [&](std::size_t b, std::size_t y, std::size_t x) { return d[(b * h + y) * w + x]; };
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (x + 2 < w) sxx += std::abs(at(b, y, x) - 2 * at(b, y, x + 1) + at(b, y, x + 2));
        if (y + 2 < h) syy += std::abs(at(b, y, x) - 2 * at(b, y + 1, x) + at(b, y + 2, x));
        if (x + 1 < w && y + 1 < h) {
          sxy += std::abs(at(b, y + 1, x + 1) - at(b, y + 1, x) - at(b, y, x + 1) + at(b, y, x));
        }
      }
    }
  }
  const double value = sxx * nxx + syy * nyy + sxy * nxy;
  return Tensor::make({}, {value}, {disparity}, [n, h, w, nxx, nyy, nxy](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    const auto& v = in.value;
    const double up = self.grad[0];
    auto idx = [&](std::size_t b, std::size_t y, std::size_t x) { return (b * h + y) * w + x; };
    auto sign = [](double r) { return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0); };
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          if (x + 2 < w) {
            const double s = up * nxx * sign(v[idx(b, y, x)] - 2 * v[idx(b, y, x + 1)] + v[idx(b, y, x + 2)]);
            g[idx(b, y, x)] += s;
            g[idx(b, y, x + 1)] -= 2 * s;
            g[idx(b, y, x + 2)] += s;
          }
          if (y + 2 < h) {
            const double s = up * nyy * sign(v[idx(b, y, x)] - 2 * v[idx(b, y + 1, x)] + v[idx(b, y + 2, x)]);
            g[idx(b, y, x)] += s;
            g[idx(b, y + 1, x)] -= 2 * s;
            g[idx(b, y + 2, x)] += s;
          }
          if (x + 1 < w && y + 1 < h) {
            const double s = up * nxy *
                             sign(v[idx(b, y + 1, x + 1)] - v[idx(b, y + 1, x)] - v[idx(b, y, x + 1)] + v[idx(b, y, x)]);
            g[idx(b, y + 1, x + 1)] += s;
            g[idx(b, y + 1, x)] -= s;
            g[idx(b, y, x + 1)] -= s;
            g[idx(b, y, x)] += s;
          }
        }
      }
    }
  });
}

Tensor mask_regularization(const Tensor& logits) {
  if (logits.rank() != 4 || logits.dim(1) % 2 != 0 || logits.dim(1) == 0) {
    throw ShapeError(fmt::format("mask_regularization: expected [N,2S,H,W], got {}", to_string(logits.shape())));
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const double norm = 1.0 / static_cast<double>(n * hw);
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t pair = 0; pair < c / 2; ++pair) {
      const double* z0 = z.data() + (b * c + 2 * pair) * hw;
      const double* z1 = z0 + hw;
      for (std::size_t p = 0; p < hw; ++p) {
        // -log softmax(z)[reliable] = logsumexp(z0, z1) - z1
        const double m = std::max(z0[p], z1[p]);
        total += m + std::log(std::exp(z0[p] - m) + std::exp(z1[p] - m)) - z1[p];
      }
    }
  }
  return Tensor::make({}, {total * norm}, {logits}, [n, c, hw, norm](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    const double up = self.grad[0] * norm;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t pair = 0; pair < c / 2; ++pair) {
        const std::size_t i0 = (b * c + 2 * pair) * hw, i1 = i0 + hw;
        for (std::size_t p = 0; p < hw; ++p) {
          const double a = in.value[i0 + p], d = in.value[i1 + p];
          // probability of the unreliable channel
          const double q = a >= d ? 1.0 / (1.0 + std::exp(d - a)) : std::exp(a - d) / (1.0 + std::exp(a - d));
          g[i0 + p] += up * q;
          g[i1 + p] -= up * q;
        }
      }
    }
  });
}

std::vector<Tensor> reliability_masks(const Tensor& logits) {
  Tensor probs = softmax_pairs(logits);
  std::vector<Tensor> masks;
  for (std::size_t s = 0; s < logits.dim(1) / 2; ++s) masks.push_back(slice_channels(probs, 2 * s + kReliableChannel, 1));
  return masks;
}

double LossBreakdown::recompose() const {
  double total = 0.0;
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    total += per_scale[l].vs + lambda_s[l] * per_scale[l].smooth + lambda_e * per_scale[l].reg;
  }
  return total;
}

std::vector<double> default_smoothness_weights(std::size_t scales, double base) {
  std::vector<double> w(scales);
  for (std::size_t l = 0; l < scales; ++l) w[l] = base / std::pow(2.0, static_cast<double>(l));
  return w;
}

LossBreakdown total_loss(std::span<const ScaleTerms> scales, std::span<const double> lambda_s, double lambda_e) {
  if (lambda_s.size() != scales.size()) {
    throw ShapeError(fmt::format("total_loss: {} smoothness weights for {} scales", lambda_s.size(), scales.size()));
  }
  if (lambda_e < 0) throw ConfigError("total_loss: lambda_e must be non-negative");
  LossBreakdown out;
  out.lambda_s.assign(lambda_s.begin(), lambda_s.end());
  out.lambda_e = lambda_e;
  std::vector<Tensor> terms;
  for (std::size_t l = 0; l < scales.size(); ++l) {
    const auto& s = scales[l];
    if (lambda_s[l] < 0) throw ConfigError("total_loss: smoothness weights must be non-negative");
    LossBreakdown::Scale values{s.vs.item(), s.smooth.item(), s.reg.item()};
    const std::pair<const char*, double> named[] = {{"vs", values.vs}, {"smooth", values.smooth}, {"reg", values.reg}};
    for (const auto& [name, v] : named) {
      if (!std::isfinite(v)) throw NumericalError(fmt::format("loss component {} at scale {} is {}", name, l, v));
    }
    out.per_scale.push_back(values);
    terms.push_back(s.vs);
    terms.push_back(scale(s.smooth, lambda_s[l]));
    terms.push_back(scale(s.reg, lambda_e));
  }
  out.total = sum_scalars(terms);
  return out;
}

}  // namespace ssvo
