#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "guardnet/model.hpp"

namespace guardnet {

inline constexpr std::string_view kContainerMagic = "JGRD1\n";
inline constexpr int kContainerVersion = 1;

/// Container layout (little-endian):
///   "JGRD1\n"
///   manifest_len: u32, manifest: JSON {format_version, arch, labels, thresholds, config}
///   n_arrays: u32, then per array { name: str16, rank: u32, dims: rank x u64, data: f32... }
///   per label { kind: u8 (0 none, 1 forest, 2 boosted), ensemble }
///   has_store: u8, then { len: u64, JGEMB1 bytes } when set
///
/// Weights are written from freeze(m), so a loaded model evaluates exactly
/// like the saved one.
std::string serialize_model(const GuardModel& m);
GuardModel parse_model(std::string_view bytes);

void save_model(const GuardModel& m, const std::filesystem::path& path);
GuardModel load_model(const std::filesystem::path& path);

std::string manifest_json(const ModelConfig& cfg);
ModelConfig config_from_manifest(std::string_view json_text);

}  // namespace guardnet
