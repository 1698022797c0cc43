#include "ssvo/models.hpp"

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "ssvo/errors.hpp"
#include "ssvo/ops.hpp"

namespace ssvo {

namespace {

constexpr std::array<std::size_t, 7> kDispKernels = {7, 7, 5, 5, 3, 3, 3};
constexpr std::array<std::size_t, 7> kDispEncoderWidth = {1, 2, 4, 8, 16, 16, 16};  // x base
// Decoder widths for levels 7..1, as multiples of base/2.
constexpr std::array<std::size_t, 7> kDispDecoderHalfWidth = {32, 32, 16, 8, 4, 2, 1};

constexpr std::array<std::size_t, 5> kPoseKernels = {7, 5, 3, 3, 3};
constexpr std::array<std::size_t, 5> kPoseEncoderWidth = {1, 2, 4, 8, 8};
// Mask decoder widths for deconvolutions 5..1, as multiples of base/2.
constexpr std::array<std::size_t, 5> kMaskDecoderHalfWidth = {16, 8, 4, 2, 1};
constexpr std::size_t kImageChannels = 3;

std::size_t half_width(std::size_t base, std::size_t multiple) { return std::max<std::size_t>(1, base * multiple / 2); }

struct LayerSpec {
  std::string name;
  std::size_t in, out, kernel;
  bool transpose;
  bool batch_norm;  // otherwise a bias
};

// Every layer of both networks in construction order.
std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
  std::vector<LayerSpec> layers;
  const std::size_t c = cfg.disp.base_channels;
  std::array<std::size_t, 7> enc{};
  std::size_t in = kImageChannels;
  for (std::size_t i = 0; i < 7; ++i) {
    enc[i] = c * kDispEncoderWidth[i];
    layers.push_back({fmt::format("disp.conv{}", i + 1), in, enc[i], kDispKernels[i], false, true});
    in = enc[i];
  }
  std::size_t prev = enc[6];
  for (std::size_t level = 7; level >= 1; --level) {
    const std::size_t width = half_width(c, kDispDecoderHalfWidth[7 - level]);
    layers.push_back({fmt::format("disp.upconv{}", level), prev, width, 3, true, true});
    std::size_t cat = width + (level >= 2 ? enc[level - 2] : 0) + (level <= 3 && level < cfg.disp.scales ? 1 : 0);
    layers.push_back({fmt::format("disp.iconv{}", level), cat, width, 3, false, true});
    if (level <= cfg.disp.scales) layers.push_back({fmt::format("disp.pred{}", level), width, 1, 3, false, false});
    prev = width;
  }

  const std::size_t p = cfg.pose.base_channels;
  const std::size_t n_src = cfg.sources();
  in = kImageChannels * cfg.pose.sequence_length;
  std::array<std::size_t, 5> penc{};
  for (std::size_t i = 0; i < 5; ++i) {
    penc[i] = p * kPoseEncoderWidth[i];
    layers.push_back({fmt::format("pose.conv{}", i + 1), in, penc[i], kPoseKernels[i], false, true});
    in = penc[i];
  }
  layers.push_back({"pose.conv6", penc[4], p * 8, 3, false, true});
  layers.push_back({"pose.conv7", p * 8, p * 8, 3, false, true});
  layers.push_back({"pose.pred", p * 8, 6 * n_src, 1, false, false});
  prev = penc[4];
  for (std::size_t k = 5; k >= 1; --k) {
    const std::size_t width = half_width(p, kMaskDecoderHalfWidth[5 - k]);
    layers.push_back({fmt::format("pose.upcnv{}", k), prev, width, 3, true, true});
    if (k <= cfg.pose.scales) layers.push_back({fmt::format("pose.mask{}", k), width, 2 * n_src, 3, false, false});
    prev = width;
  }
  return layers;
}

struct Net {
  ParamStore& params;
  bool training;

  Tensor bn_relu(const std::string& name, const Tensor& x) const {
    return relu(batch_norm(x, params.at(name + ".bn.gamma"), params.at(name + ".bn.beta"),
                           params.at(name + ".bn.running_mean").mutable_data(),
                           params.at(name + ".bn.running_var").mutable_data(), training));
  }
  Tensor conv(const std::string& name, const Tensor& x, std::size_t stride) const {
    return bn_relu(name, conv2d(x, params.at(name + ".weight"), {}, stride));
  }
  Tensor deconv(const std::string& name, const Tensor& x, std::size_t h, std::size_t w) const {
    return bn_relu(name, crop(conv2d_transpose(x, params.at(name + ".weight"), {}, 2), h, w));
  }
  Tensor predict(const std::string& name, const Tensor& x) const {
    return conv2d(x, params.at(name + ".weight"), params.at(name + ".bias"), 1);
  }
};

void check_input(const Tensor& image, std::size_t channels, const ModelConfig& cfg, const char* op) {
  if (image.rank() != 4 || image.dim(1) != channels || image.dim(2) != cfg.disp.height ||
      image.dim(3) != cfg.disp.width) {
    throw ShapeError(fmt::format("{}: expected [B,{},{},{}], got {}", op, channels, cfg.disp.height, cfg.disp.width,
                                 to_string(image.shape())));
  }
}

}  // namespace

std::size_t scaled_size(std::size_t full, std::size_t level) {
  for (std::size_t i = 0; i < level; ++i) full = (full + 1) / 2;
  return full;
}

void ModelConfig::validate() const {
  if (disp.height != pose.height || disp.width != pose.width) throw ConfigError("both networks must share the input size");
  if (disp.height % kInputMultiple != 0 || disp.width % kInputMultiple != 0 || disp.height < 8 || disp.width < 8) {
    throw ConfigError(fmt::format("input {}x{} must be at least 8 and divisible by {}", disp.height, disp.width,
                                  kInputMultiple));
  }
  if (pose.sequence_length != 3) throw ConfigError("only 3-frame sequences are supported");
  if (disp.scales < 1 || disp.scales > 4 || pose.scales != disp.scales) throw ConfigError("scales must be 1..4 and match");
  if (disp.base_channels < 1 || pose.base_channels < 1) throw ConfigError("base_channels must be positive");
  if (!(disp.alpha > 0) || !(disp.beta > 0)) throw ConfigError("alpha and beta must be positive");
}

std::string ModelConfig::to_text() const {
  return fmt::format(
      "height={}\nwidth={}\nscales={}\ndisp_base_channels={}\nalpha={:.17g}\nbeta={:.17g}\n"
      "pose_base_channels={}\nsequence_length={}\ntranslation_scale={:.17g}\nrotation_scale={:.17g}\n",
      disp.height, disp.width, disp.scales, disp.base_channels, disp.alpha, disp.beta, pose.base_channels,
      pose.sequence_length, pose.translation_scale, pose.rotation_scale);
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(fmt::format("model config is missing '{}'", key));
    return it->second;
  };
  ModelConfig c;
  try {
    c.disp.height = c.pose.height = std::stoul(get("height"));
    c.disp.width = c.pose.width = std::stoul(get("width"));
    c.disp.scales = c.pose.scales = std::stoul(get("scales"));
    c.disp.base_channels = std::stoul(get("disp_base_channels"));
    c.disp.alpha = std::stod(get("alpha"));
    c.disp.beta = std::stod(get("beta"));
    c.pose.base_channels = std::stoul(get("pose_base_channels"));
    c.pose.sequence_length = std::stoul(get("sequence_length"));
    c.pose.translation_scale = std::stod(get("translation_scale"));
    c.pose.rotation_scale = std::stod(get("rotation_scale"));
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(fmt::format("malformed model config: {}", e.what()));
  }
  c.validate();
  return c;
}

ParamStore init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (const auto& layer : layer_specs(config)) {
    // conv weights are [out,in,k,k]; transposed conv weights are [in,out,k,k].
    const Shape shape = layer.transpose ? Shape{layer.in, layer.out, layer.kernel, layer.kernel}
                                        : Shape{layer.out, layer.in, layer.kernel, layer.kernel};
    std::vector<double> w(numel(shape), 0.0);
    if (layer.name != "pose.pred") {
      const double fan_in = static_cast<double>(layer.in * layer.kernel * layer.kernel);
      std::uniform_real_distribution<double> dist(-std::sqrt(3.0 / fan_in), std::sqrt(3.0 / fan_in));
      for (auto& v : w) v = dist(rng);
    }
    store.add(layer.name + ".weight", Tensor::from(shape, std::move(w), true), true);
    if (layer.batch_norm) {
      store.add(layer.name + ".bn.gamma", Tensor::full({layer.out}, 1.0, true), true);
      store.add(layer.name + ".bn.beta", Tensor::zeros({layer.out}, true), true);
      store.add(layer.name + ".bn.running_mean", Tensor::zeros({layer.out}), false);
      store.add(layer.name + ".bn.running_var", Tensor::full({layer.out}, 1.0), false);
    } else {
      store.add(layer.name + ".bias", Tensor::zeros({layer.out}, true), true);
    }
  }
  return store;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& layer : layer_specs(config)) {
    total += layer.in * layer.out * layer.kernel * layer.kernel;  // weights
    total += layer.batch_norm ? 2 * layer.out : layer.out;          // gamma+beta or bias
  }
  return total;
}

DispOutput disp_net_forward(ParamStore& params, const ModelConfig& cfg, const Tensor& image, Mode mode) {
  check_input(image, kImageChannels, cfg, "disp_net_forward");
  Net net{params, mode == Mode::train};
  std::array<Tensor, 8> enc;  // enc[0] is the input
  enc[0] = image;
  for (std::size_t i = 1; i <= 7; ++i) enc[i] = net.conv(fmt::format("disp.conv{}", i), enc[i - 1], 2);

  DispOutput out;
  out.disparities.resize(cfg.disp.scales);
  Tensor x = enc[7];
  Tensor coarser_disp;
  for (std::size_t level = 7; level >= 1; --level) {
    const Tensor& skip = enc[level - 1];
    const std::size_t h = skip.dim(2), w = skip.dim(3);
    Tensor up = net.deconv(fmt::format("disp.upconv{}", level), x, h, w);
    std::vector<Tensor> parts{up};
    if (level >= 2) parts.push_back(skip);
    if (level <= 3 && coarser_disp.defined()) parts.push_back(upsample_nearest(coarser_disp, h, w));
    x = net.conv(fmt::format("disp.iconv{}", level), concat_channels(parts), 1);
    if (level <= cfg.disp.scales) {
      Tensor logits = net.predict(fmt::format("disp.pred{}", level), x);
      Tensor disp = reciprocal(add_scalar(scale(sigmoid(logits), cfg.disp.alpha), cfg.disp.beta));
      out.disparities[level - 1] = disp;
      coarser_disp = disp;
    }
  }
  return out;
}

PoseExpOutput pose_exp_net_forward(ParamStore& params, const ModelConfig& cfg, const Tensor& target,
                                   std::span<const Tensor> sources, Mode mode) {
  const std::size_t n_src = cfg.sources();
  if (sources.size() != n_src) {
    throw ShapeError(fmt::format("pose_exp_net_forward: expected {} source images, got {}", n_src, sources.size()));
  }
  check_input(target, kImageChannels, cfg, "pose_exp_net_forward");
  for (const auto& s : sources) check_input(s, kImageChannels, cfg, "pose_exp_net_forward");
  if (std::any_of(sources.begin(), sources.end(), [&](const Tensor& s) { return s.dim(0) != target.dim(0); })) {
    throw ShapeError("pose_exp_net_forward: batch sizes differ");
  }
  Net net{params, mode == Mode::train};
  std::vector<Tensor> stack{target};
  stack.insert(stack.end(), sources.begin(), sources.end());
  std::array<Tensor, 6> enc;
  enc[0] = concat_channels(stack);
  for (std::size_t i = 1; i <= 5; ++i) enc[i] = net.conv(fmt::format("pose.conv{}", i), enc[i - 1], 2);

  PoseExpOutput out;
  Tensor p = net.conv("pose.conv6", enc[5], 2);
  p = net.conv("pose.conv7", p, 2);
  p = global_average_pool(net.predict("pose.pred", p));  // [B, 6*(N-1)]
  const std::size_t b = target.dim(0);
  {
    // Translation and rotation channels carry separate output scales.
    std::vector<double> factors(6 * n_src);
    for (std::size_t s = 0; s < n_src; ++s) {
      for (std::size_t j = 0; j < 6; ++j) factors[6 * s + j] = j < 3 ? cfg.pose.translation_scale : cfg.pose.rotation_scale;
    }
    std::vector<double> tiled(b * 6 * n_src);
    for (std::size_t i = 0; i < tiled.size(); ++i) tiled[i] = factors[i % factors.size()];
    out.raw_pose = mul(p, Tensor::from({b, 6 * n_src}, std::move(tiled)));
  }
  for (std::size_t s = 0; s < n_src; ++s) {
    Tensor as4 = reshape(out.raw_pose, {b, 6 * n_src, 1, 1});
    out.poses.push_back(reshape(slice_channels(as4, 6 * s, 6), {b, 6}));
  }

  out.mask_logits.resize(cfg.pose.scales);
  out.masks.resize(cfg.pose.scales);
  Tensor x = enc[5];
  for (std::size_t k = 5; k >= 1; --k) {
    const Tensor& ref = enc[k - 1];
    x = net.deconv(fmt::format("pose.upcnv{}", k), x, ref.dim(2), ref.dim(3));
    if (k <= cfg.pose.scales) {
      Tensor logits = net.predict(fmt::format("pose.mask{}", k), x);
      out.mask_logits[k - 1] = logits;
      std::vector<Tensor> probs;
      Tensor soft = softmax_pairs(logits);
      // channel 2s+1 of each pair is the reliable one
      for (std::size_t s = 0; s < n_src; ++s) probs.push_back(slice_channels(soft, 2 * s + 1, 1));
      out.masks[k - 1] = std::move(probs);
    }
  }
  return out;
}

}  // namespace ssvo
