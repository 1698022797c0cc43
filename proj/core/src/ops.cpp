#include "ssvo/ops.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, to_string(a.shape()), to_string(b.shape())));
  }
}

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(fmt::format("{}: expected [N,C,H,W], got {}", op, to_string(t.shape())));
}

// Unary elementwise op; deriv(x, y) returns dy/dx.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D deriv) {
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Tensor::make(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node& x = *self.inputs[0];
    auto& gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(x.value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor reciprocal(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor activation(const Tensor& a, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case Activation::sigmoid:
      return unary(
          a,
          [](double x) {
            // Split on sign so exp never overflows.
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
          },
          [](double, double y) { return y * (1.0 - y); });
  }
  throw std::logic_error("unknown activation");
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::make({}, {total}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_scalars(std::span<const Tensor> terms) {
  double total = 0.0;
  std::vector<Tensor> inputs;
  for (const auto& t : terms) {
    if (t.size() != 1) throw ShapeError("sum_scalars: every term must be a scalar");
    total += t.item();
    inputs.push_back(t);
  }
  return Tensor::make({}, {total}, std::move(inputs), [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad_buffer()[0] += self.grad[0];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError(fmt::format("reshape {} -> {}", to_string(a.shape()), to_string(shape)));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::span<double> running_mean,
                  std::span<double> running_var, bool training) {
  require_rank4(input, "batch_norm");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (n == 0) throw ShapeError("batch_norm: batch of size 0");
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError(fmt::format("batch_norm: channel count {} does not match parameters", c));
  }
  const std::size_t count = n * hw;
  std::vector<double> mu(c), inv_std(c);
  auto x = input.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / static_cast<double>(count);
      mu[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(var + BatchNormParams::kEpsilon);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      running_mean[ch] = (1.0 - BatchNormParams::kMomentum) * running_mean[ch] + BatchNormParams::kMomentum * m;
      running_var[ch] = (1.0 - BatchNormParams::kMomentum) * running_var[ch] + BatchNormParams::kMomentum * unbiased;
    } else {
      mu[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var[ch] + BatchNormParams::kEpsilon);
    }
  }
  std::vector<double> xhat(input.size()), out(input.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      const double g = gamma.data()[ch], bt = beta.data()[ch];
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[base + i] = (x[base + i] - mu[ch]) * inv_std[ch];
        out[base + i] = g * xhat[base + i] + bt;
      }
    }
  }
  return Tensor::make(input.shape(), std::move(out), {input, gamma, beta},
                      [n, c, hw, count, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                        Node& in = *self.inputs[0];
                        Node& gm = *self.inputs[1];
                        Node& bt = *self.inputs[2];
                        const auto& dy = self.grad;
                        for (std::size_t ch = 0; ch < c; ++ch) {
                          double sum_dy = 0.0, sum_dy_xhat = 0.0;
                          for (std::size_t b = 0; b < n; ++b) {
                            const std::size_t base = (b * c + ch) * hw;
                            for (std::size_t i = 0; i < hw; ++i) {
                              sum_dy += dy[base + i];
                              sum_dy_xhat += dy[base + i] * xhat[base + i];
                            }
                          }
                          if (gm.requires_grad) gm.grad_buffer()[ch] += sum_dy_xhat;
                          if (bt.requires_grad) bt.grad_buffer()[ch] += sum_dy;
                          if (!in.requires_grad) continue;
                          auto& gx = in.grad_buffer();
                          const double g = gm.value[ch];
                          const double k = g * inv_std[ch];
                          const double inv_count = 1.0 / static_cast<double>(count);
                          for (std::size_t b = 0; b < n; ++b) {
                            const std::size_t base = (b * c + ch) * hw;
                            for (std::size_t i = 0; i < hw; ++i) {
                              if (training) {
                                gx[base + i] += k * (dy[base + i] - inv_count * sum_dy -
                                                     xhat[base + i] * inv_count * sum_dy_xhat);
                              } else {
                                gx[base + i] += k * dy[base + i];
                              }
                            }
                          }
                        }
                      });
}

Tensor softmax_pairs(const Tensor& input) {
  require_rank4(input, "softmax_pairs");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (c % 2 != 0) throw ShapeError(fmt::format("softmax_pairs: odd channel count {}", c));
  auto x = input.data();
  std::vector<double> out(input.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t pair = 0; pair < c / 2; ++pair) {
      const std::size_t i0 = (b * c + 2 * pair) * hw, i1 = i0 + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double a = x[i0 + i], d = x[i1 + i];
        const double m = std::max(a, d);
        const double ea = std::exp(a - m), ed = std::exp(d - m);
        out[i0 + i] = ea / (ea + ed);
        out[i1 + i] = ed / (ea + ed);
      }
    }
  }
  return Tensor::make(input.shape(), std::move(out), {input}, [n, c, hw](Node& self) {
    auto& gx = self.inputs[0]->grad_buffer();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t pair = 0; pair < c / 2; ++pair) {
        const std::size_t i0 = (b * c + 2 * pair) * hw, i1 = i0 + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          // d/dz of a 2-way softmax: p0*p1*(dy0 - dy1) for channel 0, negated for channel 1.
          const double t = y[i0 + i] * y[i1 + i] * (dy[i0 + i] - dy[i1 + i]);
          gx[i0 + i] += t;
          gx[i1 + i] -= t;
        }
      }
    }
  });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank4(p, "concat_channels");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t c_total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw ShapeError(fmt::format("concat_channels: {} vs {}", to_string(p.shape()), to_string(parts[0].shape())));
    }
    c_total += p.dim(1);
  }
  const std::size_t hw = h * w;
  std::vector<double> out(n * c_total * hw);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t c = p.dim(1);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(p.data().data() + b * c * hw, c * hw, out.data() + (b * c_total + off) * hw);
    }
    off += c;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make({n, c_total, h, w}, std::move(out), std::move(inputs),
                      [n, c_total, hw, offsets = std::move(offsets)](Node& self) {
                        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                          Node& in = *self.inputs[k];
                          if (!in.requires_grad) continue;
                          auto& g = in.grad_buffer();
                          const std::size_t c = in.shape[1];
                          for (std::size_t b = 0; b < n; ++b) {
                            const double* src = self.grad.data() + (b * c_total + offsets[k]) * hw;
                            double* dst = g.data() + b * c * hw;
                            for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                          }
                        }
                      });
}

Tensor slice_channels(const Tensor& input, std::size_t first, std::size_t count) {
  require_rank4(input, "slice_channels");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3), hw = h * w;
  if (first + count > c) throw ShapeError(fmt::format("slice_channels: [{}, {}) exceeds {} channels", first, first + count, c));
  std::vector<double> out(n * count * hw);
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(input.data().data() + (b * c + first) * hw, count * hw, out.data() + b * count * hw);
  }
  return Tensor::make({n, count, h, w}, std::move(out), {input}, [n, c, hw, first, count](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t b = 0; b < n; ++b) {
      const double* src = self.grad.data() + b * count * hw;
      double* dst = g.data() + (b * c + first) * hw;
      for (std::size_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  });
}

Tensor crop(const Tensor& input, std::size_t height, std::size_t width) {
  require_rank4(input, "crop");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (height > h || width > w) throw ShapeError(fmt::format("crop to {}x{} from {}", height, width, to_string(input.shape())));
  if (height == h && width == w) return input;
  std::vector<double> out(n * c * height * width);
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(input.data().data() + (p * h + y) * w, width, out.data() + (p * height + y) * width);
    }
  }
  return Tensor::make({n, c, height, width}, std::move(out), {input}, [n, c, h, w, height, width](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) g[(p * h + y) * w + x] += self.grad[(p * height + y) * width + x];
      }
    }
  });
}

Tensor upsample_nearest(const Tensor& input, std::size_t height, std::size_t width) {
  require_rank4(input, "upsample_nearest");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (height > 2 * h || width > 2 * w) {
    throw ShapeError(fmt::format("upsample_nearest to {}x{} from {}", height, width, to_string(input.shape())));
  }
  std::vector<double> out(n * c * height * width);
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) out[(p * height + y) * width + x] = input.data()[(p * h + y / 2) * w + x / 2];
    }
  }
  return Tensor::make({n, c, height, width}, std::move(out), {input}, [n, c, h, w, height, width](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) g[(p * h + y / 2) * w + x / 2] += self.grad[(p * height + y) * width + x];
      }
    }
  });
}

Tensor downsample_average(const Tensor& input) {
  require_rank4(input, "downsample_average");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  // Per output pixel: inverse of the number of covered input pixels.
  std::vector<double> inv_cover(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t cy = std::min<std::size_t>(2, h - 2 * y), cx = std::min<std::size_t>(2, w - 2 * x);
      inv_cover[y * ow + x] = 1.0 / static_cast<double>(cy * cx);
    }
  }
  std::vector<double> out(n * c * oh * ow, 0.0);
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out[(p * oh + y / 2) * ow + x / 2] += input.data()[(p * h + y) * w + x];
    }
    for (std::size_t i = 0; i < oh * ow; ++i) out[p * oh * ow + i] *= inv_cover[i];
  }
  return Tensor::make({n, c, oh, ow}, std::move(out), {input},
                      [n, c, h, w, oh, ow, inv_cover = std::move(inv_cover)](Node& self) {
                        auto& g = self.inputs[0]->grad_buffer();
                        for (std::size_t p = 0; p < n * c; ++p) {
                          for (std::size_t y = 0; y < h; ++y) {
                            for (std::size_t x = 0; x < w; ++x) {
                              const std::size_t o = (y / 2) * ow + x / 2;
                              g[(p * h + y) * w + x] += self.grad[p * oh * ow + o] * inv_cover[o];
                            }
                          }
                        }
                      });
}

Tensor global_average_pool(const Tensor& input) {
  require_rank4(input, "global_average_pool");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += input.data()[p * hw + i];
    out[p] = s / static_cast<double>(hw);
  }
  return Tensor::make({n, c}, std::move(out), {input}, [n, c, hw](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] += self.grad[p] * inv;
    }
  });
}

}  // namespace ssvo
