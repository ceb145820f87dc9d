#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include <json.hpp>

#include "manifold/core.hpp"

namespace manifold {

void to_json(nlohmann::json& j, const ConfigTag& c);
void from_json(const nlohmann::json& j, ConfigTag& c);

}  // namespace manifold

namespace manifold::io {

/// PRED1 container: zero or more records laid out back to back. Each record
/// is one trajectory, little-endian:
///
///   "PRD1" | u32 version=1 | u64 N | u32 C | u32 T
///   | T*N*C float32 (checkpoint-major, sample-major, class-minor)
///   | T u64 step numbers
///
/// An empty file holds an empty list.
inline constexpr char kPredMagic[4] = {'P', 'R', 'D', '1'};
inline constexpr std::uint32_t kPredVersion = 1;

/// Loads every record. Rows off by at most kRowSumRepair are renormalized;
/// worse rows, NaNs and malformed headers throw. Configs and epochs come from
/// the sidecar manifest when one is present.
std::vector<Trajectory> load_predictions(const std::filesystem::path& path);

/// Writes the container plus the sidecar manifest `<path>.json`.
void save_predictions(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);

/// Sidecar file name for a container.
std::filesystem::path manifest_path(const std::filesystem::path& container);

/// Labels file: JSON {"labels": [1-based ints]} or {"train": [...], "test": [...]}.
LabelVector load_labels(const std::filesystem::path& path, const std::string& split = "labels");
void save_labels(const std::map<std::string, LabelVector>& splits, const std::filesystem::path& path);

/// Writes to a temporary sibling then renames.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace manifold::io
