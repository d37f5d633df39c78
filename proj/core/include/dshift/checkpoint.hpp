#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn/module.h>
#include <torch/types.h>

namespace dshift {

/// Versioned binary parameter container shared by translation and segmentation models.
///
/// Layout (little-endian):
///   "DSHIFTCK" | u32 version | u32 len + algorithm | u32 len + config JSON |
///   u32 block count | u64 payload bytes | u32 CRC-32 | payload
/// The CRC covers algorithm, config and payload. Each payload block is
///   u32 len + name | u8 dtype | u32 ndim | i64 dims[ndim] | raw data
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string algorithm;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint_file(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws IntegrityError on bad magic, truncation or checksum mismatch.
Checkpoint load_checkpoint_file(const std::filesystem::path& path);

/// Appends parameters and buffers of `module`, names prefixed by `prefix`.
void append_module_state(Checkpoint& checkpoint, const torch::nn::Module& module,
                         const std::string& prefix);

/// Copies tensors named `prefix` + local name into the module; CompatibilityError when
/// a name is missing or a shape differs.
void restore_module_state(const Checkpoint& checkpoint, torch::nn::Module& module,
                          const std::string& prefix);

}  // namespace dshift
