#pragma once

// DTRC checkpoints: "DTRC", u16 version, u32 tensor count; per tensor a u16-length
// UTF-8 name, u8 rank, u32 extents and f32 data (all little-endian, row-major);
// then a u32-length-prefixed UTF-8 block of key=value lines.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "doctr/numerics/nn.hpp"

namespace doctr {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
  bool operator==(const CheckpointTensor&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  std::vector<std::pair<std::string, std::string>> config;

  const CheckpointTensor* find(const std::string& name) const;
  /// Value for `key` in the config block, or `fallback` when absent.
  std::string config_value(const std::string& key, const std::string& fallback = "") const;
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends every entry of `params` in registration order.
void append_params(Checkpoint& ckpt, const ParameterSet<float>& params);

/// Copies the tensors named like the entries of `params` into them. A missing
/// tensor or an extent mismatch throws ContractError naming the tensor; so does a
/// checkpoint tensor whose name starts with `scope` that `params` does not declare.
void load_params(const Checkpoint& ckpt, ParameterSet<float>& params, const std::string& scope);

}  // namespace doctr
