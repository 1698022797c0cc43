#include <Eigen/Core>
#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/ops.hpp"

namespace ssvo {

namespace {

using detail::Node;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t channels, in_h, in_w, kernel, stride, pad, out_h, out_w;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) { return (in + 2 * p - k) / s + 1; }

// cols[(c*k + ky)*k + kx][oy*out_w + ox] = src[c][oy*s - p + ky][ox*s - p + kx]
void im2col(const double* src, const ConvGeometry& g, double* cols) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          double* out = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill_n(out, g.out_w, 0.0);
            continue;
          }
          const double* line = src + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : line[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into an image.
void col2im(const double* cols, const ConvGeometry& g, double* dst) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* line = dst + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          const double* in = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) line[ix] += in[ox];
          }
        }
      }
    }
  }
}

void check_weight(const Tensor& weight, const char* op) {
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) == 0) {
    throw ShapeError(fmt::format("{}: weight must be [F,C,k,k], got {}", op, to_string(weight.shape())));
  }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.defined() && bias.size() != channels) {
    throw ShapeError(fmt::format("{}: bias of size {} for {} channels", op, bias.size(), channels));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  if (input.rank() != 4) throw ShapeError(fmt::format("conv2d: expected [N,C,H,W], got {}", to_string(input.shape())));
  check_weight(weight, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t n = input.dim(0), filters = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError(fmt::format("conv2d: channel mismatch, input has {} but weight expects {}", input.dim(1), weight.dim(1)));
  }
  check_bias(bias, filters, "conv2d");
  if (k % 2 == 0) throw ShapeError(fmt::format("conv2d: kernel size {} must be odd", k));
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), k, stride, (k - 1) / 2, 0, 0};
  if (k > g.in_h + 2 * g.pad || k > g.in_w + 2 * g.pad) {
    throw ShapeError(fmt::format("conv2d: kernel {} larger than padded input {}x{}", k, g.in_h, g.in_w));
  }
  g.out_h = conv_out(g.in_h, k, stride, g.pad);
  g.out_w = conv_out(g.in_w, k, stride, g.pad);
  const std::size_t patch = g.patch(), opix = g.out_pixels();

  std::vector<double> cols(n * patch * opix);
  std::vector<double> out(n * filters * opix);
  ConstMatMap w(weight.data().data(), filters, patch);
  const std::size_t in_stride = g.channels * g.in_h * g.in_w;
  for (std::size_t b = 0; b < n; ++b) {
    double* col = cols.data() + b * patch * opix;
    im2col(input.data().data() + b * in_stride, g, col);
    MatMap y(out.data() + b * filters * opix, filters, opix);
    y.noalias() = w * ConstMatMap(col, patch, opix);
    if (bias.defined()) {
      for (std::size_t f = 0; f < filters; ++f) y.row(f).array() += bias.data()[f];
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make({n, filters, g.out_h, g.out_w}, std::move(out), std::move(inputs),
                      [g, n, filters, in_stride, cols = std::move(cols)](Node& self) {
                        Node& x = *self.inputs[0];
                        Node& wt = *self.inputs[1];
                        const std::size_t patch = g.patch(), opix = g.out_pixels();
                        ConstMatMap w(wt.value.data(), filters, patch);
                        std::vector<double> dcol(x.requires_grad ? patch * opix : 0);
                        for (std::size_t b = 0; b < n; ++b) {
                          ConstMatMap dy(self.grad.data() + b * filters * opix, filters, opix);
                          ConstMatMap col(cols.data() + b * patch * opix, patch, opix);
                          if (wt.requires_grad) {
                            MatMap dw(wt.grad_buffer().data(), filters, patch);
                            dw.noalias() += dy * col.transpose();
                          }
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            auto& db = self.inputs[2]->grad_buffer();
                            // Plain loop: Eigen's vectorized sum peels by address, which
                            // would make the result depend on where the buffer landed.
                            for (std::size_t f = 0; f < filters; ++f) {
                              const double* row = self.grad.data() + (b * filters + f) * opix;
                              double s = 0.0;
                              for (std::size_t j = 0; j < opix; ++j) s += row[j];
                              db[f] += s;
                            }
                          }
                          if (x.requires_grad) {
                            MatMap dc(dcol.data(), patch, opix);
                            dc.noalias() = w.transpose() * dy;
                            col2im(dcol.data(), g, x.grad_buffer().data() + b * in_stride);
                          }
                        }
                      });
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  if (input.rank() != 4) {
    throw ShapeError(fmt::format("conv2d_transpose: expected [N,F,H,W], got {}", to_string(input.shape())));
  }
  check_weight(weight, "conv2d_transpose");
  if (stride == 0) throw ShapeError("conv2d_transpose: stride must be positive");
  const std::size_t n = input.dim(0), filters = weight.dim(0), channels = weight.dim(1), k = weight.dim(2);
  if (input.dim(1) != filters) {
    throw ShapeError(
        fmt::format("conv2d_transpose: channel mismatch, input has {} but weight expects {}", input.dim(1), filters));
  }
  check_bias(bias, channels, "conv2d_transpose");
  // Geometry of the forward conv this op is the adjoint of.
  ConvGeometry g{channels, stride * input.dim(2), stride * input.dim(3), k, stride, (k - 1) / 2, input.dim(2), input.dim(3)};
  if (k > g.in_h + 2 * g.pad || conv_out(g.in_h, k, stride, g.pad) != g.out_h ||
      conv_out(g.in_w, k, stride, g.pad) != g.out_w) {
    throw ShapeError(fmt::format("conv2d_transpose: kernel {} with stride {} does not tile {}", k, stride,
                                 to_string(input.shape())));
  }
  const std::size_t patch = g.patch(), opix = g.out_pixels(), out_stride = channels * g.in_h * g.in_w;

  std::vector<double> out(n * out_stride, 0.0);
  std::vector<double> col(patch * opix);
  ConstMatMap w(weight.data().data(), filters, patch);
  for (std::size_t b = 0; b < n; ++b) {
    MatMap c(col.data(), patch, opix);
    c.noalias() = w.transpose() * ConstMatMap(input.data().data() + b * filters * opix, filters, opix);
    double* y = out.data() + b * out_stride;
    col2im(col.data(), g, y);
    if (bias.defined()) {
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t i = 0; i < g.in_h * g.in_w; ++i) y[ch * g.in_h * g.in_w + i] += bias.data()[ch];
      }
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make({n, channels, g.in_h, g.in_w}, std::move(out), std::move(inputs),
                      [g, n, filters, out_stride](Node& self) {
                        Node& x = *self.inputs[0];
                        Node& wt = *self.inputs[1];
                        const std::size_t patch = g.patch(), opix = g.out_pixels();
                        ConstMatMap w(wt.value.data(), filters, patch);
                        std::vector<double> col(patch * opix);
                        for (std::size_t b = 0; b < n; ++b) {
                          const double* dy = self.grad.data() + b * out_stride;
                          im2col(dy, g, col.data());
                          ConstMatMap c(col.data(), patch, opix);
                          if (x.requires_grad) {
                            MatMap dx(x.grad_buffer().data() + b * filters * opix, filters, opix);
                            dx.noalias() += w * c;
                          }
                          if (wt.requires_grad) {
                            MatMap dw(wt.grad_buffer().data(), filters, patch);
                            dw.noalias() += ConstMatMap(x.value.data() + b * filters * opix, filters, opix) * c.transpose();
                          }
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            auto& db = self.inputs[2]->grad_buffer();
                            const std::size_t plane = g.in_h * g.in_w;
                            for (std::size_t ch = 0; ch < g.channels; ++ch) {
                              double s = 0.0;
                              for (std::size_t i = 0; i < plane; ++i) s += dy[ch * plane + i];
                              db[ch] += s;
                            }
                          }
                        }
                      });
}

}  // namespace ssvo
