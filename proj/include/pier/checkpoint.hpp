#pragma once

// Binary model checkpoint.
//
//   "PIER1"                          5 bytes
//   version, D, N_f, N_d, M, B       u32 each
//   flags                            u32 (bit 0 use_oau, bit 1 use_tau)
//   hash seed                        u64
//   time decay                       f64
//   tensor count                     u32
//   per tensor: name length u32, name bytes, rank u32, dims u32..., offset u64
//   payload                          little-endian f32, tensors back to back
//
// Offsets are relative to the start of the payload. Values are rounded to
// float32 on save, so a loaded state saves back to identical bytes.

#include <filesystem>

#include "pier/training.hpp"

namespace pier {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);

/// Throws FormatError on a bad magic, version or tensor index and
/// IntegrityError when the payload size disagrees with the index.
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace pier
