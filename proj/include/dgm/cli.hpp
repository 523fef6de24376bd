#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dgm {

// Subcommands: synth, train, render, eval, track, ablate, isotropy.
// Configuration layers: defaults, then --config files, then --set key=value,
// then --seed and --threads (DGM_THREADS when --threads is absent).
// Returns 0 on success, 2 on usage errors and 1 on runtime errors; failures
// print a single "dgm: error: <message>" line to `err`.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int run_cli(int argc, char **argv);

// FNV-1a over every regular file below `root` (relative path and bytes, in
// path order).
std::uint64_t hash_directory(const std::filesystem::path &root);

// "a..b", "a" or "all" (= 1..num_frames).
std::pair<int, int> parse_frame_range(const std::string &text, int num_frames);

}  // namespace dgm
