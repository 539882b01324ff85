#pragma once

#include <cstdint>
#include <filesystem>

#include "fxdl/param_set.hpp"

namespace fxdl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout, all integers little-endian:
//   "FXDL" | u32 version | u32 array count
//   per array: u32 name length | name bytes | u32 rank | u64 extents[rank]
//              | f32 data
//   u64 FNV-1a checksum over every preceding byte
void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace fxdl
