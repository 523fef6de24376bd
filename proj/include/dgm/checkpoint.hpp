#pragma once

#include "dgm/trainer.hpp"

#include <filesystem>
#include <string>

namespace dgm {

// Single-file checkpoint:
//   "DGMCKPT\0"  u32 version  u32 section count
//   section table: 16-byte zero-padded name, u64 offset, u64 size, u64 FNV-1a
//   section payloads, in table order
// Sections: "config" (key=value text), "state" (counters), "ladder" (every
// set with its neighbor graph and optimizer moments), "cameras" (training
// camera per frame). Contains no timestamps, so equal states give equal
// bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const TrainState &state);
TrainState deserialize_checkpoint(const std::string &bytes, const std::string &source = "checkpoint");

void save_checkpoint(const std::filesystem::path &path, const TrainState &state);
TrainState load_checkpoint(const std::filesystem::path &path);

}  // namespace dgm
