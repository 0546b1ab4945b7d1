#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparsing/model.hpp"

namespace sparsing {

struct Checkpoint {
  ModelConfig config;
  Weights<float> weights;
  std::uint64_t tokens_seen = 0;
  std::uint64_t step = 0;
};

// SPLW checkpoint layout, all integers little-endian:
//   "SPLW" | u32 version
//   u32 d_h, d_f, n_layers, n_heads, vocab_size, max_seq_len, activation | u64 seed
//   u64 tokens_seen | u64 step
//   u32 tensor_count, then per tensor:
//     u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | u64 byte_offset
//   raw float32 tensor data; offsets are relative to the start of this section,
//   each tensor stored row-major in its declared shape.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::uint64_t offset = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Tensor manifest of a stored checkpoint.
std::vector<TensorEntry> read_manifest(const std::filesystem::path& path);

}  // namespace sparsing
