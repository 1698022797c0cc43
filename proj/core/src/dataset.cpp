#include "ssvo/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/image.hpp"

namespace ssvo {

namespace fs = std::filesystem;

namespace {

std::uint32_t to_big_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return __builtin_bswap32(v);
  return v;
}

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor quantize(const Tensor& image) { return image_to_tensor(tensor_to_image(image)); }

std::vector<std::uint8_t> mask_from_png(const fs::path& path, std::size_t h, std::size_t w) {
  const Image8 img = read_png(path);
  std::vector<std::uint8_t> out(img.width * img.height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.pixels[i * img.channels] > 127 ? 1 : 0;
  if (img.height == h && img.width == w) return out;
  // Nearest lookup when the working resolution differs.
  std::vector<std::uint8_t> resized(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sy = std::min(img.height - 1, y * img.height / h);
      const std::size_t sx = std::min(img.width - 1, x * img.width / w);
      resized[y * w + x] = out[sy * img.width + sx];
    }
  }
  return resized;
}

}  // namespace

std::vector<FrameTriplet> sliding_triplets(std::size_t frames) {
  std::vector<FrameTriplet> out;
  for (std::size_t t = 1; t + 1 < frames; ++t) out.push_back({t - 1, t, t + 1});
  return out;
}

void write_depth_dpt(const fs::path& path, const Tensor& depth) {
  if (depth.rank() != 4 || depth.dim(0) != 1 || depth.dim(1) != 1) throw ShapeError("write_depth_dpt: expected [1,1,H,W]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write depth '{}'", path.string()));
  auto put = [&](std::uint32_t v) {
    v = to_big_endian(v);
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  put(static_cast<std::uint32_t>(depth.dim(3)));
  put(static_cast<std::uint32_t>(depth.dim(2)));
  for (double d : depth.data()) put(std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Tensor read_depth_dpt(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open depth '{}'", path.string()));
  auto get = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw IoError(fmt::format("truncated depth file '{}'", path.string()));
    return to_big_endian(v);
  };
  const auto w = static_cast<std::int32_t>(get()), h = static_cast<std::int32_t>(get());
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) throw IoError(fmt::format("bad depth header in '{}'", path.string()));
  std::vector<double> values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (auto& v : values) v = std::bit_cast<float>(get());
  return Tensor::from({1, 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(values));
}

Dataset load_dataset(const fs::path& dir, std::size_t height, std::size_t width) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("dataset directory '{}' does not exist", dir.string()));
  const fs::path intr = dir / "intrinsics.txt";
  if (!fs::exists(intr)) throw IoError(fmt::format("dataset '{}' has no intrinsics.txt", dir.string()));
  std::vector<fs::path> frames = sorted_files(dir, "frame_", ".png");
  if (frames.empty()) {
    for (const auto& p : sorted_files(dir, "", ".png")) {
      if (p.filename().string().rfind("corrupt_", 0) != 0) frames.push_back(p);
    }
  }
  if (frames.size() < 3) throw ConfigError(fmt::format("dataset '{}' has {} frames; need at least 3", dir.string(), frames.size()));

  Dataset ds;
  ds.height = height;
  ds.width = width;
  std::size_t native_h = 0, native_w = 0;
  for (const auto& f : frames) {
    const Image8 img = read_png(f);
    if (native_h == 0) {
      native_h = img.height;
      native_w = img.width;
    } else if (img.height != native_h || img.width != native_w) {
      throw IoError(fmt::format("frame '{}' differs in size from the first frame", f.string()));
    }
    ds.frame_names.push_back(f.filename().string());
    ds.frames.push_back(resize_area(image_to_tensor(img), height, width));
  }
  const double sx = static_cast<double>(width) / static_cast<double>(native_w);
  const double sy = static_cast<double>(height) / static_cast<double>(native_h);
  const CameraIntrinsics k = read_intrinsics(intr);
  ds.intrinsics = {k.fx * sx, k.fy * sy, (k.cx + 0.5) * sx - 0.5, (k.cy + 0.5) * sy - 0.5};
  ds.triplets = sliding_triplets(ds.frames.size());

  const auto depths = sorted_files(dir, "depth_", ".dpt");
  if (depths.size() == frames.size()) {
    for (const auto& d : depths) ds.depths.push_back(resize_area(read_depth_dpt(d), height, width));
  }
  const auto masks = sorted_files(dir, "corrupt_", ".png");
  if (masks.size() == frames.size()) {
    for (const auto& m : masks) ds.corrupted.push_back(mask_from_png(m, height, width));
  }
  if (fs::exists(dir / "groundtruth.txt")) ds.ground_truth = read_tum(dir / "groundtruth.txt");
  return ds;
}

void write_dataset(const fs::path& dir, const SyntheticSequence& seq, const std::string& description) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  bool any_corruption = false;
  for (const auto& f : seq.frames) {
    any_corruption = any_corruption || std::any_of(f.corrupted.begin(), f.corrupted.end(), [](auto v) { return v != 0; });
  }
  Trajectory gt;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    write_png(dir / fmt::format("frame_{:06d}.png", i), tensor_to_image(f.image));
    write_depth_dpt(dir / fmt::format("depth_{:06d}.dpt", i), f.depth);
    if (any_corruption) {
      Image8 mask{seq.width, seq.height, 1, {}};
      mask.pixels.resize(f.corrupted.size());
      for (std::size_t p = 0; p < f.corrupted.size(); ++p) mask.pixels[p] = f.corrupted[p] ? 255 : 0;
      write_png(dir / fmt::format("corrupt_{:06d}.png", i), mask);
    }
    gt.push_back(StampedPose::from_transform(0.1 * static_cast<double>(i), seq.poses[i]));
  }
  write_tum(dir / "groundtruth.txt", gt);
  write_intrinsics(dir / "intrinsics.txt", seq.intrinsics);
  std::ofstream scene(dir / "scene.txt");
  scene << description;
  if (!scene) throw IoError(fmt::format("failed writing '{}'", (dir / "scene.txt").string()));
}

Dataset dataset_from_sequence(const SyntheticSequence& seq) {
  Dataset ds;
  ds.intrinsics = seq.intrinsics;
  ds.height = seq.height;
  ds.width = seq.width;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    ds.frame_names.push_back(fmt::format("frame_{:06d}.png", i));
    ds.frames.push_back(quantize(seq.frames[i].image));
    std::vector<double> depth;
    for (double d : seq.frames[i].depth.data()) depth.push_back(static_cast<float>(d));
    ds.depths.push_back(Tensor::from({1, 1, seq.height, seq.width}, std::move(depth)));
    ds.corrupted.push_back(seq.frames[i].corrupted);
    ds.ground_truth.push_back(StampedPose::from_transform(0.1 * static_cast<double>(i), seq.poses[i]));
  }
  ds.triplets = sliding_triplets(ds.frames.size());
  return ds;
}

}  // namespace ssvo
