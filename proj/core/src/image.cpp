#include "ssvo/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include <fmt/format.h>

#include "ssvo/errors.hpp"

namespace ssvo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError(fmt::format("cannot open image '{}'", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("unreadable image '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels == 2) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("'{}': gray+alpha images are not supported", path.string()));
  }
  img.pixels.resize(img.width * img.height * img.channels);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_png: only gray or RGB images");
  if (image.pixels.size() != image.width * image.height * image.channels) throw IoError("write_png: pixel buffer size");
  File file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError(fmt::format("cannot write image '{}'", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("failed writing '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * image.channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor image_to_tensor(const Image8& image) {
  const std::size_t hw = image.width * image.height;
  std::vector<double> out(3 * hw);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t src_c = image.channels == 1 ? 0 : c;
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = image.pixels[i * image.channels + src_c] / 255.0;
  }
  return Tensor::from({1, 3, image.height, image.width}, std::move(out));
}

Image8 tensor_to_image(const Tensor& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || (image.dim(1) != 1 && image.dim(1) != 3)) {
    throw ShapeError(fmt::format("tensor_to_image: expected [1,1|3,H,W], got {}", to_string(image.shape())));
  }
  Image8 img{image.dim(3), image.dim(2), image.dim(1), {}};
  const std::size_t hw = img.width * img.height;
  img.pixels.resize(hw * img.channels);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < hw; ++i) {
      const double v = std::clamp(image.data()[c * hw + i], 0.0, 1.0);
      img.pixels[i * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

Tensor resize_area(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 4) throw ShapeError("resize_area: expected [N,C,H,W]");
  const std::size_t planes = image.dim(0) * image.dim(1), h = image.dim(2), w = image.dim(3);
  if (h == height && w == width) return image.detach();
  if (height == 0 || width == 0) throw ShapeError("resize_area: empty output");
  // Separable box filter: per output index, the covered input indices and weights.
  auto footprints = [](std::size_t in, std::size_t out) {
    std::vector<std::vector<std::pair<std::size_t, double>>> f(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double lo = o * ratio, hi = (o + 1) * ratio;
      for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
        const double cover = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
        if (cover > 0) f[o].emplace_back(i, cover / ratio);
      }
    }
    return f;
  };
  const auto fy = footprints(h, height), fx = footprints(w, width);
  std::vector<double> out(planes * height * width, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = image.data().data() + p * h * w;
    for (std::size_t oy = 0; oy < height; ++oy) {
      for (std::size_t ox = 0; ox < width; ++ox) {
        double s = 0.0;
        for (auto [iy, wy] : fy[oy]) {
          for (auto [ix, wx] : fx[ox]) s += wy * wx * src[iy * w + ix];
        }
        out[(p * height + oy) * width + ox] = s;
      }
    }
  }
  return Tensor::from({image.dim(0), image.dim(1), height, width}, std::move(out));
}

Tensor stack_batch(std::span<const Tensor> images) {
  if (images.empty()) throw ShapeError("stack_batch: no images");
  Shape shape = images[0].shape();
  if (shape.empty() || shape[0] != 1) throw ShapeError("stack_batch: inputs must have a leading batch of 1");
  std::vector<double> out;
  out.reserve(images.size() * images[0].size());
  for (const auto& im : images) {
    if (im.shape() != shape) throw ShapeError("stack_batch: inputs differ in shape");
    out.insert(out.end(), im.data().begin(), im.data().end());
  }
  shape[0] = images.size();
  return Tensor::from(std::move(shape), std::move(out));
}

}  // namespace ssvo
