#include "ssvo/warp.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

std::array<double, 4> bilinear_weights(double u, double v) {
  const double fu = u - std::floor(u), fv = v - std::floor(v);
  return {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
}

SampleResult bilinear_sample(const Tensor& source, const Tensor& coords) {
  if (source.rank() != 4) throw ShapeError(fmt::format("bilinear_sample: source must be [N,C,H,W], got {}", to_string(source.shape())));
  if (coords.rank() != 4 || coords.dim(3) != 2 || coords.dim(0) != source.dim(0)) {
    throw ShapeError(fmt::format("bilinear_sample: coords must be [{},H,W,2], got {}", source.dim(0), to_string(coords.shape())));
  }
  const std::size_t n = source.dim(0), c = source.dim(1), sh = source.dim(2), sw = source.dim(3);
  const std::size_t h = coords.dim(1), w = coords.dim(2), hw = h * w, shw = sh * sw;

  SampleResult result;
  result.valid.assign(n * hw, 0);
  std::vector<double> out(n * c * hw, 0.0);
  auto src = source.data();
  auto xy = coords.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = b * hw + p;
      const double u = xy[2 * i], v = xy[2 * i + 1];
      if (!std::isfinite(u) || !std::isfinite(v)) throw NumericalError("bilinear_sample: non-finite coordinate");
      if (u < 0.0 || v < 0.0 || u > static_cast<double>(sw - 1) || v > static_cast<double>(sh - 1)) continue;
      result.valid[i] = 1;
      const std::size_t x0 = static_cast<std::size_t>(u), y0 = static_cast<std::size_t>(v);
      const std::size_t x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
      const double fu = u - static_cast<double>(x0), fv = v - static_cast<double>(y0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* s = src.data() + (b * c + ch) * shw;
        out[(b * c + ch) * hw + p] = (1 - fu) * (1 - fv) * s[y0 * sw + x0] + fu * (1 - fv) * s[y0 * sw + x1] +
                                     (1 - fu) * fv * s[y1 * sw + x0] + fu * fv * s[y1 * sw + x1];
      }
    }
  }
  result.values = Tensor::make(
      {n, c, h, w}, std::move(out), {source, coords}, [n, c, sh, sw, hw, shw, valid = result.valid](detail::Node& self) {
        auto& sn = *self.inputs[0];
        auto& cn = *self.inputs[1];
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t i = b * hw + p;
            if (!valid[i]) continue;
            const double u = cn.value[2 * i], v = cn.value[2 * i + 1];
            const std::size_t x0 = static_cast<std::size_t>(u), y0 = static_cast<std::size_t>(v);
            const std::size_t x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
            const double fu = u - static_cast<double>(x0), fv = v - static_cast<double>(y0);
            double gu = 0.0, gv = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double g = self.grad[(b * c + ch) * hw + p];
              if (g == 0.0) continue;
              const std::size_t base = (b * c + ch) * shw;
              if (sn.requires_grad) {
                auto& gs = sn.grad_buffer();
                gs[base + y0 * sw + x0] += g * (1 - fu) * (1 - fv);
                gs[base + y0 * sw + x1] += g * fu * (1 - fv);
                gs[base + y1 * sw + x0] += g * (1 - fu) * fv;
                gs[base + y1 * sw + x1] += g * fu * fv;
              }
              const double* s = sn.value.data() + base;
              const double tl = s[y0 * sw + x0], tr = s[y0 * sw + x1], bl = s[y1 * sw + x0], br = s[y1 * sw + x1];
              gu += g * ((1 - fv) * (tr - tl) + fv * (br - bl));
              gv += g * ((1 - fu) * (bl - tl) + fu * (br - tr));
            }
            if (cn.requires_grad) {
              auto& gc = cn.grad_buffer();
              gc[2 * i] += gu;
              gc[2 * i + 1] += gv;
            }
          }
        }
      });
  return result;
}

std::size_t WarpResult::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

WarpResult inverse_warp_matrix(const Tensor& source, const Tensor& depth, const Tensor& transform,
                               const CameraIntrinsics& k) {
  if (source.rank() != 4 || depth.rank() != 4 || source.dim(0) != depth.dim(0)) {
    throw ShapeError(fmt::format("inverse_warp: source {} and depth {} disagree", to_string(source.shape()),
                                 to_string(depth.shape())));
  }
  ProjectedGrid grid = batch_project(depth, transform, k);
  SampleResult sample = bilinear_sample(source, grid.coords);
  WarpResult out;
  out.synthesized = std::move(sample.values);
  out.coords = std::move(grid.coords);
  out.valid = std::move(sample.valid);
  for (std::size_t i = 0; i < out.valid.size(); ++i) out.valid[i] = out.valid[i] && grid.valid[i];
  return out;
}

WarpResult inverse_warp(const Tensor& source, const Tensor& depth, const Tensor& pose, const CameraIntrinsics& k) {
  return inverse_warp_matrix(source, depth, pose_vec_to_matrix(pose), k);
}

}  // namespace ssvo
