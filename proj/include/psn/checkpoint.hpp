#pragma once

#include <filesystem>

#include "psn/model.hpp"

namespace psn {

// Binary model checkpoint:
//   magic "PSN1", u32 version, length-prefixed config text,
//   u32 tensor count, then per tensor: length-prefixed name, u32 rank,
//   u32 dims, raw float32 little-endian data.
constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const PsnModel& model, const std::filesystem::path& path);
PsnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace psn
