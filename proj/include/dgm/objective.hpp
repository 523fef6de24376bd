#pragma once

#include "dgm/gradients.hpp"
#include "dgm/losses.hpp"
#include "dgm/marbles.hpp"
#include "dgm/render.hpp"
#include "dgm/sequence.hpp"

#include <cstdint>
#include <vector>

namespace dgm {

struct ObjectiveOptions {
  LossWeights weights;
  RenderConfig render;
  int track_k = 32;
  int iso_samples = 32;
  // Only the photometric, depth and segmentation terms (initialization).
  bool render_terms_only = false;
};

// Precomputed per-frame supervision for one sequence.
class ObjectiveContext {
public:
  explicit ObjectiveContext(const Sequence &sequence);

  const Sequence &sequence() const { return *sequence_; }
  const FrameTargets &targets(int frame) const { return targets_.at(frame - 1); }

  // Tracks visible at both frames, as (source, target) pixel pairs.
  std::vector<TrackPair> track_pairs(int source, int target) const;

private:
  const Sequence *sequence_;
  std::vector<FrameTargets> targets_;
};

struct ObjectiveResult {
  LossComponents components;
  double total = 0.0;
};

// Full objective for `set` rendered at frame t, with tracks and isometry
// taken between frames `source` and t. Every component value is computed;
// gradients are accumulated into `grads` (if non-null) only for components
// with nonzero weight. Throws NonFiniteError naming the offending term.
ObjectiveResult evaluate_objective(const MarbleSet &set, const NeighborGraph &graph,
                                   const ObjectiveContext &context, int t, int source,
                                   std::uint64_t seed, const ObjectiveOptions &options,
                                   MarbleGrads *grads);

}  // namespace dgm
