#pragma once

#include "dgm/losses.hpp"
#include "dgm/marbles.hpp"
#include "dgm/objective.hpp"
#include "dgm/optimizer.hpp"
#include "dgm/render.hpp"
#include "dgm/sequence.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dgm {

struct TrainConfig {
  int eta = 100;         // motion-estimation steps per frontier frame
  int beta = 40;         // global-adjustment steps per merged set
  int init_steps = 40;   // per-frame fine-tuning after initialization
  int target_count = 200000;
  int k_max = 32;
  // (instance, stop length): trajectories of that instance are frozen while
  // building sets longer than the stop length.
  std::vector<std::pair<int, int>> instance_stop;
  LossWeights weights;
  OptimizerConfig optim;
  RenderConfig render;
  InitOptions init;
  std::uint64_t seed = 0;
  int track_window = 12;
  int track_k = 32;
  int iso_neighbors = 8;
  int iso_samples = 32;
  double prune_opacity = 0.005;
  double prune_scale = 1e-4;

  void validate() const;
  // Curriculum length at which training stops.
  int final_length() const;
  bool operator==(const TrainConfig &) const = default;
};

// One rung of the ladder with its regularization graph and optimizer state.
struct SetState {
  MarbleSet set;
  NeighborGraph graph;
  AdamState adam;
  bool operator==(const SetState &) const = default;
};

struct TrainState {
  TrainConfig config;
  int num_frames = 0;
  int level = 0;             // completed curriculum levels
  int level_length = 1;      // current K
  std::int64_t iterations = 0;
  bool finished = false;
  std::vector<SetState> ladder;
  std::vector<Camera> cameras;  // training camera per frame

  // Disjoint, contiguous, ordered, covering [1, num_frames], trajectory
  // lengths equal to interval lengths.
  void validate() const;
  const SetState &set_for(int t) const;
  bool operator==(const TrainState &) const = default;
};

struct IterationInfo {
  int level_length = 1;
  int pair = 0;
  Phase phase = Phase::init;
  int iteration = 0;
  int frame = 1;
  ObjectiveResult objective;
};

// `level=<K> pair=<n> phase=<name> iter=<k> loss=<float> components=<csv>`
std::string progress_line(const IterationInfo &info);

class TrainObserver {
public:
  virtual ~TrainObserver() = default;
  virtual void on_iteration(const IterationInfo &) {}
  // Called after every completed level (including initialization).
  virtual void on_level(const TrainState &) {}
  virtual void on_merge(std::size_t, std::size_t, const MarbleSet &) {}
  // Snapshots around each frontier optimization; requested via
  // wants_frontier_snapshots() since they copy the set.
  virtual bool wants_frontier_snapshots() const { return false; }
  virtual void on_frontier(const MarbleSet &, const MarbleSet &, int, Direction) {}
};

TrainState initialize(const Sequence &sequence, const TrainConfig &config,
                      TrainObserver *observer = nullptr);

// Extends a forward through b's last frame and b backward through a's first
// frame, optimizing only the frontier trajectory entry each time.
void motion_estimation_phase(SetState &a, SetState &b, const ObjectiveContext &context,
                             const TrainConfig &config, int level, int pair,
                             TrainObserver *observer = nullptr, std::int64_t *iterations = nullptr);

void global_adjustment_phase(SetState &s, const ObjectiveContext &context,
                             const TrainConfig &config, int level, int pair,
                             TrainObserver *observer = nullptr, std::int64_t *iterations = nullptr);

// Runs one curriculum level. Returns false (and marks the state finished)
// when no further level applies.
bool train_level(TrainState &state, const ObjectiveContext &context,
                 TrainObserver *observer = nullptr);

// Continues `state` until finished. `on_checkpoint` sees the state after
// every level.
void resume(TrainState &state, const Sequence &sequence, TrainObserver *observer = nullptr,
            const std::function<void(const TrainState &)> &on_checkpoint = {});

TrainState train(const Sequence &sequence, const TrainConfig &config,
                 TrainObserver *observer = nullptr,
                 const std::function<void(const TrainState &)> &on_checkpoint = {});

RenderOutput render_at(const TrainState &state, int t, const Camera &camera);

// Source frame for tracking and isometry: uniform in the window around t
// clipped to [lo, hi], excluding t whenever another frame is available.
int sample_source_frame(int t, int lo, int hi, int window, std::uint64_t seed);

}  // namespace dgm
