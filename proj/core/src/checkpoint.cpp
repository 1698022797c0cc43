#include "ssvo/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "ssvo/errors.hpp"

namespace ssvo {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  }
  template <class T>
  void put(T value) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out_.write(bytes.data(), bytes.size());
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put_raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError(fmt::format("write to '{}' failed", path_.string()));
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError(fmt::format("cannot open '{}'", path.string()));
  }
  template <class T>
  T get() {
    std::array<char, sizeof(T)> bytes;
    read(bytes.data(), bytes.size());
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) throw IoError(fmt::format("'{}' is truncated", path_.string()));
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  Writer w(path);
  w.put_raw(kCheckpointMagic, 4);
  w.put<std::uint8_t>(kCheckpointVersion);
  w.put_string(checkpoint.config_text);
  const auto& entries = checkpoint.params.entries();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.put_string(e.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.put<std::uint64_t>(d);
    for (double v : e.tensor.data()) w.put<double>(v);
  }
  w.put<std::uint8_t>(checkpoint.adam ? 1 : 0);
  if (checkpoint.adam) {
    const auto& a = *checkpoint.adam;
    w.put<std::uint64_t>(a.step_count);
    w.put<double>(a.learning_rate);
    w.put<double>(a.beta1);
    w.put<double>(a.beta2);
    w.put<double>(a.epsilon);
    std::vector<std::string> names;
    for (const auto& e : entries) {
      if (e.trainable) names.push_back(e.name);
    }
    if (!a.first_moment.empty() && a.first_moment.size() != names.size()) {
      throw ShapeError("save_checkpoint: optimizer moments do not match the trainable parameters");
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.first_moment.size()));
    for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
      w.put_string(names[i]);
      w.put<std::uint64_t>(a.first_moment[i].size());
      for (double v : a.first_moment[i]) w.put<double>(v);
      for (double v : a.second_moment[i]) w.put<double>(v);
    }
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError(fmt::format("'{}' is not a checkpoint (bad magic)", path.string()));
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kCheckpointVersion) {
    throw IoError(fmt::format("'{}' has unsupported checkpoint version {}", path.string(), version));
  }
  Checkpoint cp;
  cp.config_text = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = r.get<double>();
    // Trainability is not stored; assign_params() onto a freshly built model restores it.
    cp.params.add(std::move(name), Tensor::from(std::move(shape), std::move(values)), false);
  }
  if (r.get<std::uint8_t>() != 0) {
    AdamState a;
    a.step_count = r.get<std::uint64_t>();
    a.learning_rate = r.get<double>();
    a.beta1 = r.get<double>();
    a.beta2 = r.get<double>();
    a.epsilon = r.get<double>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      r.get_string();
      const auto size = r.get<std::uint64_t>();
      std::vector<double> m(size), v(size);
      for (auto& x : m) x = r.get<double>();
      for (auto& x : v) x = r.get<double>();
      a.first_moment.push_back(std::move(m));
      a.second_moment.push_back(std::move(v));
    }
    cp.adam = std::move(a);
  }
  return cp;
}

void assign_params(ParamStore& dst, const ParamStore& src) {
  for (auto& e : dst.entries()) {
    if (!src.contains(e.name)) throw ConfigError(fmt::format("architecture mismatch: '{}' missing from checkpoint", e.name));
    const Tensor& from = src.at(e.name);
    if (from.shape() != e.tensor.shape()) {
      throw ConfigError(fmt::format("architecture mismatch: '{}' is {} in checkpoint but {} in model", e.name,
                                    to_string(from.shape()), to_string(e.tensor.shape())));
    }
    std::copy(from.data().begin(), from.data().end(), e.tensor.mutable_data().begin());
  }
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace ssvo
