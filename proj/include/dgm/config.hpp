#pragma once

#include "dgm/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgm {

struct EvalConfig {
  double pck_threshold = 0.05;  // fraction of the image diagonal
  int pck_k = 32;               // marbles used to carry a keypoint
  int isotropy_iterations = 5000;
  int isotropy_marbles = 4000;
  bool operator==(const EvalConfig &) const = default;
};

// Everything a command consumes, addressable by `section.name` keys.
struct RunConfig {
  TrainConfig train;
  EvalConfig eval;
  int threads = 0;  // 0 keeps the OpenMP default
  bool operator==(const RunConfig &) const = default;
};

std::vector<std::string> config_keys();
std::string get_config_value(const RunConfig &config, const std::string &key);
// Throws on unknown keys or unparsable values.
void set_config_value(RunConfig &config, const std::string &key, const std::string &value);

// `key=value` lines in key order.
std::string format_config(const RunConfig &config);

// Applies `key=value` lines; blank lines and `#` comments are skipped.
void apply_config_text(RunConfig &config, const std::string &text, const std::string &source);
void apply_config_file(RunConfig &config, const std::filesystem::path &path);

// FNV-1a, used for config and input fingerprints in logs.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 14695981039346656037ULL);

}  // namespace dgm
