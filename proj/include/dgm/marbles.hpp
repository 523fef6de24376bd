#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"

#include <cstdint>
#include <vector>

namespace dgm {

struct FrameBundle;

// An isotropic Gaussian with a per-frame translation trajectory. Rotation is
// identity and never stored; covariance is scale^2 * I.
struct Marble {
  Vec3 mu = Vec3::Zero();  // position at the set's first frame
  double log_scale = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;
  int instance = 0;
  std::vector<Vec3> delta_x{Vec3::Zero()};  // delta_x[0] == 0

  double scale() const { return std::exp(log_scale); }
  double opacity() const { return logistic(opacity_logit); }
  bool operator==(const Marble &) const = default;
};

// Marbles whose trajectories cover frames [first_frame, last_frame].
struct MarbleSet {
  std::vector<Marble> marbles;
  int first_frame = 1;
  int last_frame = 1;

  int length() const { return last_frame - first_frame + 1; }
  std::size_t size() const { return marbles.size(); }
  bool empty() const { return marbles.empty(); }
  bool covers(int t) const { return t >= first_frame && t <= last_frame; }

  // Trajectory length == interval length for every marble, positive scale.
  void validate() const;
  bool operator==(const MarbleSet &) const = default;
};

enum class Direction { forward, backward };

struct InitOptions {
  int target_count = 200000;
  std::uint64_t seed = 0;
  int outlier_neighbors = 8;
  double outlier_std_ratio = 2.0;
  int scale_neighbors = 3;
  double init_opacity = 0.1;
  bool allow_undershoot = true;
  bool operator==(const InitOptions &) const = default;
};

// Unprojects valid depth pixels, removes statistical outliers, downsamples
// uniformly to target_count and initializes scale from nearest-neighbor
// spacing.
MarbleSet init_marbles_from_frame(const FrameBundle &frame, const Camera &camera,
                                  const InitOptions &opts);

Vec3 position_at(const Marble &marble, int set_first_frame, int t);

// Positions of every marble at frame t.
std::vector<Vec3> positions_at(const MarbleSet &set, int t);

// Adds one frame with the constant-velocity guess. Backward extension
// re-anchors mu at the new first frame unless `rebase` is false, in which
// case delta_x[0] holds the prepended offset until rebase_trajectories().
MarbleSet extend_trajectory(const MarbleSet &set, Direction direction, bool rebase = true);
void extend_trajectory_inplace(MarbleSet &set, Direction direction, bool rebase = true);

// Moves delta_x[0] into mu so that delta_x[0] is exactly zero again.
void rebase_trajectories(MarbleSet &set);

MarbleSet merge(const MarbleSet &a, const MarbleSet &b);

MarbleSet prune_and_downsample(const MarbleSet &set, int target_count, double opacity_min,
                               double scale_min, std::uint64_t seed);

// Inlier flags (1 = keep). A point is an outlier when its mean distance to
// its k nearest neighbors exceeds the population mean by more than
// std_ratio standard deviations.
std::vector<std::uint8_t> statistical_inliers(const std::vector<Vec3> &points, int k,
                                              double std_ratio);

// k nearest neighbors of each point among the others, -1 padded.
struct NeighborGraph {
  int k = 0;
  std::vector<std::int32_t> neighbors;  // size() * k

  std::size_t size() const { return k == 0 ? 0 : neighbors.size() / k; }
  const std::int32_t *of(std::size_t i) const { return neighbors.data() + i * k; }
  bool operator==(const NeighborGraph &) const = default;
};

NeighborGraph build_neighbor_graph(const std::vector<Vec3> &points, int k);

}  // namespace dgm
