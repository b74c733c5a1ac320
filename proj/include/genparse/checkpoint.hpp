#pragma once

// Parameter container file.
//
// All integers little-endian.
//
//   offset  size  field
//   0       4     magic "GPCK"
//   4       4     u32 format version (1)
//   8       4     u32 metadata length L
//   12      L     metadata, UTF-8 JSON text
//   12+L    4     u32 tensor count N
//   then N records:
//           4     u32 name length K
//           K     name bytes
//           4     u32 rows
//           4     u32 cols
//           1     u8 dtype (0 = float32, 1 = float64)
//           rows*cols*{4|8}  values, row-major IEEE-754
//   end-4   4     u32 CRC-32 (zlib polynomial) of every preceding byte

#include <cstdint>
#include <filesystem>
#include <string>

#include "genparse/tensor.hpp"

namespace genparse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Real>& store,
                     const std::string& metadata_json);

// Loads values into an existing store; every stored name must exist with the
// same shape, and every store parameter must be present. Returns the metadata.
template <typename Real>
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore<Real>& store);

std::string read_checkpoint_metadata(const std::filesystem::path& path);

}  // namespace genparse
