#include "dgm/marbles.hpp"

#include "dgm/knn.hpp"
#include "dgm/rng.hpp"
#include "dgm/sequence.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace dgm {

void MarbleSet::validate() const {
  if (first_frame > last_frame) throw Error("marble set: first_frame > last_frame");
  const std::size_t len = static_cast<std::size_t>(length());
  for (std::size_t i = 0; i < marbles.size(); ++i) {
    const Marble &m = marbles[i];
    if (m.delta_x.size() != len)
      throw Error("marble set: marble " + std::to_string(i) + " trajectory length " +
                  std::to_string(m.delta_x.size()) + " != interval length " +
                  std::to_string(len));
    if (!std::isfinite(m.log_scale)) throw Error("marble set: non-finite scale");
  }
}

Vec3 position_at(const Marble &marble, int set_first_frame, int t) {
  const int k = t - set_first_frame;
  if (k < 0 || k >= static_cast<int>(marble.delta_x.size()))
    throw std::out_of_range("position_at: frame " + std::to_string(t) +
                            " outside trajectory interval");
  return marble.mu + marble.delta_x[k];
}

std::vector<Vec3> positions_at(const MarbleSet &set, int t) {
  if (!set.covers(t))
    throw std::out_of_range("positions_at: frame " + std::to_string(t) + " not covered");
  const int k = t - set.first_frame;
  std::vector<Vec3> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out[i] = set.marbles[i].mu + set.marbles[i].delta_x[k];
  return out;
}

void rebase_trajectories(MarbleSet &set) {
  for (Marble &m : set.marbles) {
    const Vec3 anchor = m.delta_x.front();
    if (anchor.isZero(0.0)) continue;
    m.mu += anchor;
    for (Vec3 &d : m.delta_x) d -= anchor;
    m.delta_x.front().setZero();
  }
}

void extend_trajectory_inplace(MarbleSet &set, Direction direction, bool rebase) {
  if (set.empty()) throw Error("extend_trajectory: empty marble set");
  for (Marble &m : set.marbles) {
    auto &dx = m.delta_x;
    const std::size_t n = dx.size();
    if (direction == Direction::forward) {
      const Vec3 next = n == 1 ? dx[0] : Vec3(dx[n - 1] + (dx[n - 1] - dx[n - 2]));
      dx.push_back(next);
    } else {
      const Vec3 prev = n == 1 ? dx[0] : Vec3(dx[0] - (dx[1] - dx[0]));
      dx.insert(dx.begin(), prev);
    }
  }
  if (direction == Direction::forward) {
    ++set.last_frame;
  } else {
    --set.first_frame;
    if (rebase) rebase_trajectories(set);
  }
}

MarbleSet extend_trajectory(const MarbleSet &set, Direction direction, bool rebase) {
  MarbleSet out = set;
  extend_trajectory_inplace(out, direction, rebase);
  return out;
}

MarbleSet merge(const MarbleSet &a, const MarbleSet &b) {
  if (a.first_frame != b.first_frame || a.last_frame != b.last_frame)
    throw Error("merge: interval mismatch [" + std::to_string(a.first_frame) + "," +
                std::to_string(a.last_frame) + "] vs [" + std::to_string(b.first_frame) + "," +
                std::to_string(b.last_frame) + "]");
  MarbleSet out;
  out.first_frame = a.first_frame;
  out.last_frame = a.last_frame;
  out.marbles.reserve(a.size() + b.size());
  out.marbles.insert(out.marbles.end(), a.marbles.begin(), a.marbles.end());
  out.marbles.insert(out.marbles.end(), b.marbles.begin(), b.marbles.end());
  return out;
}

namespace {

// Uniform sample of `count` indices from [0, n), returned in increasing order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= n) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

MarbleSet prune_and_downsample(const MarbleSet &set, int target_count, double opacity_min,
                               double scale_min, std::uint64_t seed) {
  if (target_count < 1) throw Error("prune_and_downsample: target_count must be >= 1");
  std::vector<std::size_t> survivors;
  survivors.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Marble &m = set.marbles[i];
    if (m.opacity() < opacity_min || m.scale() < scale_min) continue;
    survivors.push_back(i);
  }
  const auto keep = sample_indices(survivors.size(), static_cast<std::size_t>(target_count), seed);
  MarbleSet out;
  out.first_frame = set.first_frame;
  out.last_frame = set.last_frame;
  out.marbles.reserve(keep.size());
  for (std::size_t k : keep) out.marbles.push_back(set.marbles[survivors[k]]);
  return out;
}

std::vector<std::uint8_t> statistical_inliers(const std::vector<Vec3> &points, int k,
                                              double std_ratio) {
  std::vector<std::uint8_t> keep(points.size(), 1);
  if (points.size() <= static_cast<std::size_t>(k) || k <= 0) return keep;
  KdTree3 tree(points);
  std::vector<double> mean_dist(points.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(points.size()); ++i) {
    const auto nn = tree.knn(points[i], k, static_cast<std::int32_t>(i));
    double s = 0.0;
    for (const auto &n : nn) s += std::sqrt(n.dist2);
    mean_dist[i] = s / static_cast<double>(nn.size());
  }
  double mean = 0.0;
  for (double d : mean_dist) mean += d;
  mean /= static_cast<double>(mean_dist.size());
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / static_cast<double>(mean_dist.size()));
  const double limit = mean + std_ratio * stddev;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (mean_dist[i] > limit) keep[i] = 0;
  return keep;
}

NeighborGraph build_neighbor_graph(const std::vector<Vec3> &points, int k) {
  NeighborGraph g;
  g.k = k;
  g.neighbors.assign(points.size() * static_cast<std::size_t>(k), -1);
  if (k <= 0 || points.size() < 2) return g;
  KdTree3 tree(points);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(points.size()); ++i) {
    const auto nn = tree.knn(points[i], k, static_cast<std::int32_t>(i));
    for (std::size_t j = 0; j < nn.size(); ++j) g.neighbors[i * k + j] = nn[j].index;
  }
  return g;
}

MarbleSet init_marbles_from_frame(const FrameBundle &frame, const Camera &camera,
                                  const InitOptions &opts) {
  if (opts.target_count < 1) throw Error("init_marbles_from_frame: target_count must be >= 1");
  const int w = frame.depth.width, h = frame.depth.height;
  if (frame.rgb.width != w || frame.rgb.height != h || frame.seg.width != w || frame.seg.height != h)
    throw Error("init_marbles_from_frame: raster size mismatch in frame " +
                std::to_string(frame.index));

  std::vector<Vec3> points;
  std::vector<int> pixel;
  points.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float z = frame.depth.at(x, y);
      if (z == 0.0f) continue;
      if (!(z > 0.0f) || !std::isfinite(z))
        throw Error("init_marbles_from_frame: non-positive depth " + std::to_string(z) +
                    " at frame " + std::to_string(frame.index) + " pixel (" +
                    std::to_string(x) + "," + std::to_string(y) + ")");
      points.push_back(camera.to_world(camera.unproject(x + 0.5, y + 0.5, z)));
      pixel.push_back(y * w + x);
    }
  }
  if (points.empty()) throw Error("init_marbles_from_frame: no valid depth pixels");

  const auto inlier = statistical_inliers(points, opts.outlier_neighbors, opts.outlier_std_ratio);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (inlier[i]) kept.push_back(i);
  if (kept.size() < static_cast<std::size_t>(opts.target_count) && !opts.allow_undershoot)
    throw Error("init_marbles_from_frame: only " + std::to_string(kept.size()) +
                " points survive outlier removal, need " + std::to_string(opts.target_count));

  const auto pick = sample_indices(kept.size(), static_cast<std::size_t>(opts.target_count),
                                   opts.seed);
  std::vector<Vec3> chosen(pick.size());
  for (std::size_t i = 0; i < pick.size(); ++i) chosen[i] = points[kept[pick[i]]];

  std::vector<double> scale(chosen.size(), 0.01);
  if (chosen.size() > 1) {
    KdTree3 tree(chosen);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const auto nn = tree.knn(chosen[i], opts.scale_neighbors, static_cast<std::int32_t>(i));
      double s = 0.0;
      for (const auto &n : nn) s += std::sqrt(n.dist2);
      s /= static_cast<double>(std::max<std::size_t>(1, nn.size()));
      scale[i] = std::max(s, 1e-7);
    }
  }

  MarbleSet set;
  set.first_frame = set.last_frame = frame.index;
  set.marbles.resize(chosen.size());
  const double op_logit = logit(opts.init_opacity);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    Marble &m = set.marbles[i];
    const int p = pixel[kept[pick[i]]];
    const int x = p % w, y = p / w;
    m.mu = chosen[i];
    m.log_scale = std::log(scale[i]);
    m.color = Vec3(frame.rgb.at(x, y, 0), frame.rgb.at(x, y, 1), frame.rgb.at(x, y, 2)) / 255.0;
    m.opacity_logit = op_logit;
    m.instance = frame.seg.at(x, y);
    m.delta_x.assign(1, Vec3::Zero());
  }
  return set;
}

}  // namespace dgm
