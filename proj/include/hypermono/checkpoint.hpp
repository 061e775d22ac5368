#pragma once

// Binary checkpoint: "HMCK", u32 version, then records of
// (u32 name length, name bytes, u32 rank, u64 extents..., f64 payload),
// all little-endian. Optimizer state lives under the "opt/" prefix.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hypermono/optim.hpp"
#include "hypermono/tensor.hpp"

namespace hypermono::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

std::vector<CheckpointRecord> snapshot(const ParameterStore& params, const AdamW* optimizer = nullptr);
// Copies matching records into the store (and optimizer, when given).
// Missing names or shape mismatches raise CompatibilityError.
void restore(const std::vector<CheckpointRecord>& records, ParameterStore& params, AdamW* optimizer = nullptr);

}  // namespace hypermono::ad
