#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ssvo/adam.hpp"
#include "ssvo/params.hpp"

namespace ssvo {

inline constexpr char kCheckpointMagic[4] = {'S', 'S', 'V', 'O'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Layout (all integers and floats little-endian):
///   "SSVO" u8:version
///   u32:len  config text (key=value lines)
///   u32:count, then per record  u32:len name  u32:rank  u64[rank]:dims  f64[numel]:values
///   u8:has_adam, then  u64:step  f64:lr f64:beta1 f64:beta2 f64:eps
///                      u32:count, per entry u32:len name  u64:n  f64[n]:m  f64[n]:v
struct Checkpoint {
  std::string config_text;
  ParamStore params;
  std::optional<AdamState> adam;  // moments ordered like params.trainable()
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values from src into dst by name. Every dst entry must be present in
/// src with the same shape.
void assign_params(ParamStore& dst, const ParamStore& src);

/// Lower-case hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace ssvo
