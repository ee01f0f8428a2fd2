#pragma once

// Binary checkpoint:
//   "OV2VSS1" (7 bytes) | u32 version | u32 manifest length | manifest JSON |
//   parameter values as little-endian f32, in manifest order.
// Files are written to a temporary sibling and renamed into place.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ov2vss/model.hpp"

namespace ov::inline OV2VSS_ABI {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  Settings settings;
  std::vector<std::string> vocabulary;  // full training vocabulary
  std::vector<int> seen;
  std::vector<int> unseen;
  int aux_classes = 0;
  int regions = 0;
  int iteration = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedParameter> params;
};

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointMeta& meta, const ParameterStore& store);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const ParameterStore& store);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::unique_ptr<Ov2VssModel> model_from_checkpoint(const Checkpoint& ckpt);

// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace ov::inline OV2VSS_ABI
