#include "dgm/trainer.hpp"

#include "dgm/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace dgm {

namespace {

enum SeedTag : std::uint64_t { kInit = 1, kInitStep, kMotion, kAdjust, kPrune, kFrame };

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

ObjectiveOptions objective_options(const TrainConfig &c, bool render_only) {
  ObjectiveOptions o;
  o.weights = c.weights;
  o.render = c.render;
  o.track_k = c.track_k;
  o.iso_samples = c.iso_samples;
  o.render_terms_only = render_only;
  return o;
}

ParamGroups groups_for(const TrainConfig &c, Phase phase, int length, int target_length,
                       int frontier = -1) {
  ParamGroups base;
  for (const auto &[instance, stop] : c.instance_stop)
    if (target_length > stop) base.frozen_instances.push_back(instance);
  return configure_phase(base, phase, length, frontier);
}

void run_iteration(SetState &s, const ObjectiveContext &ctx, const TrainConfig &c,
                   const ObjectiveOptions &opts, const ParamGroups &groups, int frame,
                   int source, std::uint64_t seed, IterationInfo &info, TrainObserver *observer,
                   std::int64_t *iterations) {
  MarbleGrads grads = MarbleGrads::zeros_like(s.set);
  info.frame = frame;
  info.objective = evaluate_objective(s.set, s.graph, ctx, frame, source, seed, opts, &grads);
  step(s.set, grads, groups, s.adam, c.optim);
  if (iterations) ++*iterations;
  if (observer) observer->on_iteration(info);
}

NeighborGraph graph_for(const MarbleSet &set, int k) {
  return build_neighbor_graph(positions_at(set, set.first_frame), k);
}

}  // namespace

void TrainConfig::validate() const {
  if (eta < 0 || beta < 0 || init_steps < 0) throw Error("eta, beta and init_steps must be >= 0");
  if (target_count < 1) throw Error("target_count must be >= 1");
  if (!is_power_of_two(k_max)) throw Error("k_max must be a power of two");
  for (const auto &[instance, stop] : instance_stop)
    if (instance < 0 || !is_power_of_two(stop))
      throw Error("instance stop lengths must be powers of two");
  if (track_window < 0 || track_k < 1 || iso_neighbors < 0 || iso_samples < 0)
    throw Error("track and isometry sizes must be non-negative");
  if (render.tile_size < 1 || !(render.cutoff_sigma > 0.0)) throw Error("invalid render config");
  weights.validate();
  optim.validate();
}

int TrainConfig::final_length() const {
  int k = k_max;
  for (const auto &[instance, stop] : instance_stop) k = std::max(k, stop);
  return k;
}

void TrainState::validate() const {
  int next = 1;
  for (const SetState &s : ladder) {
    if (s.set.first_frame != next) throw Error("ladder is not contiguous");
    if (s.set.last_frame < s.set.first_frame) throw Error("ladder set has an empty interval");
    if (s.set.length() > level_length) throw Error("ladder set exceeds the curriculum length");
    s.set.validate();
    next = s.set.last_frame + 1;
  }
  if (next != num_frames + 1) throw Error("ladder does not cover the sequence");
  if (cameras.size() != static_cast<std::size_t>(num_frames))
    throw Error("training cameras do not match the frame count");
}

const SetState &TrainState::set_for(int t) const {
  for (const SetState &s : ladder)
    if (s.set.covers(t)) return s;
  throw Error("frame " + std::to_string(t) + " outside the trained sequence");
}

std::string progress_line(const IterationInfo &info) {
  std::ostringstream os;
  os.precision(6);
  os << "level=" << info.level_length << " pair=" << info.pair << " phase=" << phase_name(info.phase)
     << " iter=" << info.iteration << " loss=" << info.objective.total << " components=";
  for (int i = 0; i < LossComponents::kCount; ++i)
    os << (i ? "," : "") << info.objective.components.get(i);
  return os.str();
}

int sample_source_frame(int t, int lo, int hi, int window, std::uint64_t seed) {
  const int a = std::max(lo, t - window), b = std::min(hi, t + window);
  if (b <= a) return t;
  Rng rng(seed);
  const int pick = static_cast<int>(uniform_int(rng, a, b - 1));
  return pick >= t ? pick + 1 : pick;
}

TrainState initialize(const Sequence &sequence, const TrainConfig &config,
                      TrainObserver *observer) {
  config.validate();
  if (sequence.frames.empty()) throw Error("sequence has no frames");
  TrainState state;
  state.config = config;
  state.config.render.num_labels = std::max(config.render.num_labels, sequence.num_labels());
  state.num_frames = sequence.num_frames();
  state.level_length = 1;
  for (const FrameBundle &f : sequence.frames) state.cameras.push_back(f.camera);
  const ObjectiveContext ctx(sequence);
  const TrainConfig &c = state.config;
  const ObjectiveOptions opts = objective_options(c, true);

  for (const FrameBundle &frame : sequence.frames) {
    InitOptions io = c.init;
    io.target_count = c.target_count;
    io.seed = derive_seed(c.seed, {kInit, static_cast<std::uint64_t>(frame.index)});
    SetState s;
    s.set = init_marbles_from_frame(frame, frame.camera, io);
    s.graph = graph_for(s.set, c.iso_neighbors);
    s.adam = AdamState::zeros_like(s.set);
    const ParamGroups groups = groups_for(c, Phase::init, 1, 1);
    IterationInfo info;
    info.level_length = 1;
    info.pair = frame.index - 1;
    info.phase = Phase::init;
    for (int it = 0; it < c.init_steps; ++it) {
      info.iteration = it;
      run_iteration(s, ctx, c, opts, groups, frame.index, frame.index,
                    derive_seed(c.seed, {kInitStep, static_cast<std::uint64_t>(frame.index),
                                         static_cast<std::uint64_t>(it)}),
                    info, observer, &state.iterations);
    }
    state.ladder.push_back(std::move(s));
  }
  state.finished = state.ladder.size() == 1 || state.level_length >= c.final_length();
  state.validate();
  if (observer) observer->on_level(state);
  return state;
}

void motion_estimation_phase(SetState &a, SetState &b, const ObjectiveContext &ctx,
                             const TrainConfig &c, int level, int pair, TrainObserver *observer,
                             std::int64_t *iterations) {
  if (a.set.last_frame + 1 != b.set.first_frame) throw Error("motion estimation needs adjacent sets");
  if (a.set.empty() || b.set.empty()) throw Error("motion estimation on an empty set");
  const ObjectiveOptions opts = objective_options(c, false);
  const int level_length = std::max(a.set.length(), b.set.length());
  const int target_length = a.set.length() + b.set.length();
  const bool snapshots = observer && observer->wants_frontier_snapshots();
  IterationInfo info;
  info.level_length = level_length;
  info.pair = pair;
  info.phase = Phase::motion_estimation;

  auto optimize_frontier = [&](SetState &s, int frame, int index, Direction dir) {
    MarbleSet before;
    if (snapshots) before = s.set;
    const ParamGroups groups = groups_for(c, Phase::motion_estimation, s.set.length(), target_length, index);
    const std::uint64_t tag = dir == Direction::forward ? 0 : 1;
    for (int it = 0; it < c.eta; ++it) {
      const std::uint64_t seed =
          derive_seed(c.seed, {kMotion, static_cast<std::uint64_t>(level),
                               static_cast<std::uint64_t>(pair), tag,
                               static_cast<std::uint64_t>(frame), static_cast<std::uint64_t>(it)});
      const int source = sample_source_frame(frame, s.set.first_frame, s.set.last_frame,
                                             c.track_window, derive_seed(seed, {kFrame}));
      info.iteration = it;
      run_iteration(s, ctx, c, opts, groups, frame, source, seed, info, observer, iterations);
    }
    if (snapshots) observer->on_frontier(before, s.set, index, dir);
  };

  const int last = b.set.last_frame, first = a.set.first_frame;
  while (a.set.last_frame < last) {
    extend_trajectory_inplace(a.set, Direction::forward);
    a.adam.extend(Direction::forward);
    optimize_frontier(a, a.set.last_frame, a.set.length() - 1, Direction::forward);
  }
  while (b.set.first_frame > first) {
    extend_trajectory_inplace(b.set, Direction::backward, false);
    b.adam.extend(Direction::backward);
    optimize_frontier(b, b.set.first_frame, 0, Direction::backward);
  }
  rebase_trajectories(b.set);
}

void global_adjustment_phase(SetState &s, const ObjectiveContext &ctx, const TrainConfig &c,
                             int level, int pair, TrainObserver *observer,
                             std::int64_t *iterations) {
  const ObjectiveOptions opts = objective_options(c, false);
  const ParamGroups groups = groups_for(c, Phase::global_adjustment, s.set.length(), s.set.length());
  IterationInfo info;
  info.level_length = s.set.length();
  info.pair = pair;
  info.phase = Phase::global_adjustment;
  for (int it = 0; it < c.beta; ++it) {
    const std::uint64_t seed = derive_seed(
        c.seed, {kAdjust, static_cast<std::uint64_t>(level), static_cast<std::uint64_t>(pair),
                 static_cast<std::uint64_t>(it)});
    Rng rng(derive_seed(seed, {kFrame}));
    const int frame = static_cast<int>(uniform_int(rng, s.set.first_frame, s.set.last_frame));
    const int source = sample_source_frame(frame, s.set.first_frame, s.set.last_frame,
                                           c.track_window, derive_seed(seed, {kFrame, 1}));
    info.iteration = it;
    run_iteration(s, ctx, c, opts, groups, frame, source, seed, info, observer, iterations);
  }
}

bool train_level(TrainState &state, const ObjectiveContext &ctx, TrainObserver *observer) {
  const TrainConfig &c = state.config;
  if (state.finished || state.ladder.size() <= 1 || state.level_length >= c.final_length()) {
    state.finished = true;
    return false;
  }
  const int level = state.level + 1;
  std::vector<SetState> next;
  next.reserve((state.ladder.size() + 1) / 2);
  for (std::size_t p = 0; p + 1 < state.ladder.size(); p += 2) {
    SetState a = std::move(state.ladder[p]);
    SetState b = std::move(state.ladder[p + 1]);
    const int pair = static_cast<int>(p / 2);
    motion_estimation_phase(a, b, ctx, c, level, pair, observer, &state.iterations);
    MarbleSet merged = merge(a.set, b.set);
    if (observer) observer->on_merge(a.set.size(), b.set.size(), merged);
    SetState m;
    m.set = prune_and_downsample(merged, c.target_count, c.prune_opacity, c.prune_scale,
                                 derive_seed(c.seed, {kPrune, static_cast<std::uint64_t>(level),
                                                      static_cast<std::uint64_t>(pair)}));
    m.graph = graph_for(m.set, c.iso_neighbors);
    m.adam = AdamState::zeros_like(m.set);
    global_adjustment_phase(m, ctx, c, level, pair, observer, &state.iterations);
    next.push_back(std::move(m));
  }
  if (state.ladder.size() % 2 == 1) next.push_back(std::move(state.ladder.back()));
  state.ladder = std::move(next);
  state.level = level;
  state.level_length *= 2;
  state.finished = state.ladder.size() == 1 || state.level_length >= c.final_length();
  state.validate();
  if (observer) observer->on_level(state);
  return true;
}

void resume(TrainState &state, const Sequence &sequence, TrainObserver *observer,
            const std::function<void(const TrainState &)> &on_checkpoint) {
  if (state.num_frames != sequence.num_frames())
    throw Error("checkpoint does not match the sequence frame count");
  const ObjectiveContext ctx(sequence);
  while (train_level(state, ctx, observer))
    if (on_checkpoint) on_checkpoint(state);
}

TrainState train(const Sequence &sequence, const TrainConfig &config, TrainObserver *observer,
                 const std::function<void(const TrainState &)> &on_checkpoint) {
  TrainState state = initialize(sequence, config, observer);
  if (on_checkpoint) on_checkpoint(state);
  resume(state, sequence, observer, on_checkpoint);
  return state;
}

RenderOutput render_at(const TrainState &state, int t, const Camera &camera) {
  if (t < 1 || t > state.num_frames) throw Error("render_at: frame out of range");
  const SetState &s = state.set_for(t);
  const ProjectedSplats splats = project(s.set, t, camera, state.config.render);
  return rasterize(splats, camera, state.config.render);
}

}  // namespace dgm
