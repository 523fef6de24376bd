#pragma once

#include "dgm/core.hpp"
#include "dgm/marbles.hpp"
#include "dgm/render.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dgm {

struct LossWeights {
  double tracking = 1.0;
  double photometric = 0.7;
  double depth = 0.1;
  double segmentation = 0.4;
  double iso_local = 4000.0;    // lambda
  double iso_instance = 3.0;    // sigma
  double tv_depth = 20.0;       // xi
  double chamfer = 1.0;         // phi

  void validate() const;
  bool operator==(const LossWeights &) const = default;
};

// Values of every objective term for one iteration.
struct LossComponents {
  double tracking = 0.0;
  double photometric = 0.0;
  double depth = 0.0;
  double segmentation = 0.0;
  double iso_local = 0.0;
  double iso_instance = 0.0;
  double tv_depth = 0.0;
  double chamfer = 0.0;

  static constexpr int kCount = 8;
  static const char *name(int i);
  double get(int i) const;
  double &get(int i);
};

double weight_of(const LossWeights &w, int component);

// Weighted sum; gradients are combined with the same weights by the caller
// via weight_of().
double total_objective(const LossComponents &c, const LossWeights &w);

// ---------------------------------------------------------------------------
// Tracking

// One point track observed at the source frame i and the target frame j.
struct TrackPair {
  Vec2 source = Vec2::Zero();
  Vec2 target = Vec2::Zero();
};

struct TrackingLossResult {
  double value = 0.0;
  std::vector<Vec2> d_mean_source, d_mean_target;
  std::vector<double> d_depth_source, d_depth_target;
};

// For each track the K nearest visible source splats (2D) are penalized for
// changing their depth-scaled distance to the tracked point. Their weight is
// the composited contribution at the source pixel (zero if absent), given in
// `source_contrib[q]` for track q. Mean-reduced over tracks.
TrackingLossResult tracking_loss(const ProjectedSplats &source, const ProjectedSplats &target,
                                 std::span<const TrackPair> tracks,
                                 std::span<const std::vector<Contribution>> source_contrib,
                                 int k_neighbors);

// K nearest visible splats to `p` among those usable as track anchors
// (visible in both frames).
std::vector<std::int32_t> track_neighbors(const ProjectedSplats &source,
                                          const ProjectedSplats &target, const Vec2 &p, int k);

// ---------------------------------------------------------------------------
// Rendering L1 terms

// Supervision targets for one frame, in the units the renderer produces.
struct FrameTargets {
  ImageD rgb;         // [0, 1]
  ImageD disparity;   // 1 / depth, 0 where depth is invalid
  ImageU16 labels;
};

FrameTargets make_targets(const ImageU8 &rgb, const ImageF &depth, const ImageU16 &labels);

struct RenderLossResult {
  double photometric = 0.0, depth = 0.0, segmentation = 0.0;
  ImageD d_color, d_disparity, d_segmentation;  // gradient of each own term
};

RenderLossResult render_l1_losses(const RenderOutput &output, const FrameTargets &targets);

// ---------------------------------------------------------------------------
// Geometry terms

struct PairLossResult {
  double value = 0.0;
  std::vector<Vec3> d_pos_i, d_pos_j;
};

// Mean over graph edges of | |a_i - b_i| - |a_j - b_j| |.
PairLossResult local_isometry_loss(std::span<const Vec3> pos_i, std::span<const Vec3> pos_j,
                                   const NeighborGraph &graph);

// Same penalty over `sample_size` random same-instance partners per marble.
PairLossResult instance_isometry_loss(std::span<const Vec3> pos_i, std::span<const Vec3> pos_j,
                                      std::span<const int> instances, int sample_size,
                                      std::uint64_t seed);

// Explicit pair list, shared by the sampled loss and its tests.
PairLossResult pair_isometry_loss(std::span<const Vec3> pos_i, std::span<const Vec3> pos_j,
                                  std::span<const std::pair<std::int32_t, std::int32_t>> pairs);
std::vector<std::pair<std::int32_t, std::int32_t>> sample_instance_pairs(
    std::span<const int> instances, int sample_size, std::uint64_t seed);

struct TvLossResult {
  double value = 0.0;
  std::vector<double> d_weight;  // aligned with output.records.entries
  std::vector<double> d_depth;   // per splat
};

// Per pixel: sum of normalized weights times |D - weighted mean D|,
// mean-reduced over pixels with at least one contributor.
TvLossResult depth_tv_loss(const RenderOutput &output, const ProjectedSplats &splats);

struct ChamferResult {
  double value = 0.0;
  std::vector<Vec3> d_pos;
};

// Random equal halves; sum of both directed nearest-neighbor distances,
// divided by the number of points in both halves.
ChamferResult chamfer_loss(std::span<const Vec3> positions, std::uint64_t seed);
ChamferResult chamfer_loss_halves(std::span<const Vec3> positions,
                                  std::span<const std::int32_t> half_a,
                                  std::span<const std::int32_t> half_b);

// Set-level conveniences matching the operation signatures.
PairLossResult local_isometry_loss(const MarbleSet &set, int i, int j, const NeighborGraph &graph);
PairLossResult instance_isometry_loss(const MarbleSet &set, int i, int j, int sample_size,
                                      std::uint64_t seed);
ChamferResult chamfer_loss(const MarbleSet &set, int t, std::uint64_t seed);

}  // namespace dgm
