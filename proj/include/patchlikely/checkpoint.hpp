#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchlikely/training.hpp"

namespace patchlikely {

// Little-endian layout:
//   "PLFW" | u32 version (1)
//   u32 patch_size | u32 channels | u32 K | u32 hidden_width | u64 step | u64 seed
//   tensors: model parameters in FlowParams::tensors() order, then the Adam
//   first moments, then the Adam second moments; each tensor is
//   u32 rank | u32 extents[rank] | f32 payload
//   u32 CRC-32 of every preceding byte
constexpr char kCheckpointMagic[4] = {'P', 'L', 'F', 'W'};
constexpr uint32_t kCheckpointVersion = 1;

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin = "checkpoint");

// Writes to a temporary sibling and renames, so a failed write never leaves
// a partial checkpoint behind.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
// 64-bit FNV-1a, hex encoded. Used to tag generated outputs with their inputs.
std::string content_hash(const std::vector<uint8_t>& bytes);

}  // namespace patchlikely
