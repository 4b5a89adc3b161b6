#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ensbench/model.hpp"

namespace ensbench {

/// Trained model plus everything needed to run it again.
struct Checkpoint {
  ModelParams params;
  Standardization stats;
  nlohmann::json config;  // full experiment config used for training
  std::uint64_t seed = 0;
  std::string config_hash;
};

// File layout: "ENSC" | u16 version=1 | u32 header_len | JSON header |
// f32 blobs, one per parameter array in header order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ensbench
