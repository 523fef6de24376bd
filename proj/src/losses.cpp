#include "dgm/losses.hpp"

#include "dgm/knn.hpp"
#include "dgm/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace dgm {

void LossWeights::validate() const {
  const double all[] = {tracking, photometric, depth, segmentation,
                        iso_local, iso_instance, tv_depth, chamfer};
  for (double w : all)
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("loss weights must be finite and >= 0");
}

const char *LossComponents::name(int i) {
  static const char *names[kCount] = {"tracking", "photometric", "depth", "segmentation",
                                      "iso_local", "iso_instance", "tv_depth", "chamfer"};
  return names[i];
}

double LossComponents::get(int i) const {
  return const_cast<LossComponents *>(this)->get(i);
}

double &LossComponents::get(int i) {
  switch (i) {
    case 0: return tracking;
    case 1: return photometric;
    case 2: return depth;
    case 3: return segmentation;
    case 4: return iso_local;
    case 5: return iso_instance;
    case 6: return tv_depth;
    default: return chamfer;
  }
}

double weight_of(const LossWeights &w, int c) {
  switch (c) {
    case 0: return w.tracking;
    case 1: return w.photometric;
    case 2: return w.depth;
    case 3: return w.segmentation;
    case 4: return w.iso_local;
    case 5: return w.iso_instance;
    case 6: return w.tv_depth;
    default: return w.chamfer;
  }
}

double total_objective(const LossComponents &c, const LossWeights &w) {
  double total = 0.0;
  for (int i = 0; i < LossComponents::kCount; ++i) {
    const double wi = weight_of(w, i);
    if (wi != 0.0) total += wi * c.get(i);
  }
  return total;
}

// ---------------------------------------------------------------------------

namespace {
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool usable_anchor(const ProjectedSplats &source, const ProjectedSplats &target, std::size_t g) {
  return source.splats[g].visible && target.splats[g].visible;
}
}  // namespace

std::vector<std::int32_t> track_neighbors(const ProjectedSplats &source,
                                          const ProjectedSplats &target, const Vec2 &p, int k) {
  // Brute-force selection; callers with many queries go through the tree in
  // tracking_loss.
  std::vector<std::pair<double, std::int32_t>> cand;
  for (std::size_t g = 0; g < source.size(); ++g)
    if (usable_anchor(source, target, g))
      cand.push_back({(source.splats[g].mean2d - p).squaredNorm(), static_cast<std::int32_t>(g)});
  const std::size_t n = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(cand.begin(), cand.begin() + n, cand.end());
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = cand[i].second;
  return out;
}

TrackingLossResult tracking_loss(const ProjectedSplats &source, const ProjectedSplats &target,
                                 std::span<const TrackPair> tracks,
                                 std::span<const std::vector<Contribution>> source_contrib,
                                 int k_neighbors) {
  if (source.size() != target.size())
    throw Error("tracking_loss: source and target projections differ in size");
  if (source_contrib.size() != tracks.size())
    throw Error("tracking_loss: one contribution list per track is required");
  const std::size_t n = source.size();
  TrackingLossResult r;
  r.d_mean_source.assign(n, Vec2::Zero());
  r.d_mean_target.assign(n, Vec2::Zero());
  r.d_depth_source.assign(n, 0.0);
  r.d_depth_target.assign(n, 0.0);
  if (tracks.empty()) return r;

  std::vector<std::int32_t> anchor_ids;
  std::vector<Vec2> anchor_pts;
  for (std::size_t g = 0; g < n; ++g) {
    if (!usable_anchor(source, target, g)) continue;
    anchor_ids.push_back(static_cast<std::int32_t>(g));
    anchor_pts.push_back(source.splats[g].mean2d);
  }
  if (anchor_ids.empty()) return r;
  const KdTree2 tree(anchor_pts);
  const double inv_tracks = 1.0 / static_cast<double>(tracks.size());

  for (std::size_t q = 0; q < tracks.size(); ++q) {
    const Vec2 &pi = tracks[q].source;
    const Vec2 &pj = tracks[q].target;
    const auto &contrib = source_contrib[q];
    for (const auto &nb : tree.knn(pi, k_neighbors)) {
      const std::int32_t g = anchor_ids[nb.index];
      double alpha = 0.0;
      for (const Contribution &c : contrib)
        if (c.splat == g) {
          alpha = c.weight();
          break;
        }
      if (alpha == 0.0) continue;
      const Splat &si = source.splats[g];
      const Splat &sj = target.splats[g];
      const Vec2 ui = si.mean2d - pi, uj = sj.mean2d - pj;
      const double ri = ui.norm(), rj = uj.norm();
      const double e = si.depth * ri - sj.depth * rj;
      r.value += inv_tracks * alpha * std::abs(e);
      const double c = inv_tracks * alpha * sign(e);
      r.d_depth_source[g] += c * ri;
      r.d_depth_target[g] -= c * rj;
      if (ri > 0.0) r.d_mean_source[g] += c * si.depth * ui / ri;
      if (rj > 0.0) r.d_mean_target[g] -= c * sj.depth * uj / rj;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

FrameTargets make_targets(const ImageU8 &rgb, const ImageF &depth, const ImageU16 &labels) {
  FrameTargets t;
  t.rgb = ImageD(rgb.width, rgb.height, 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) t.rgb.data[i] = rgb.data[i] / 255.0;
  t.disparity = ImageD(depth.width, depth.height, 1);
  for (std::size_t i = 0; i < depth.data.size(); ++i)
    t.disparity.data[i] = depth.data[i] > 0.0f ? 1.0 / depth.data[i] : 0.0;
  t.labels = labels;
  return t;
}

RenderLossResult render_l1_losses(const RenderOutput &out, const FrameTargets &tg) {
  const int w = out.width, h = out.height, nl = out.num_labels;
  if (tg.rgb.width != w || tg.rgb.height != h || tg.disparity.width != w ||
      tg.disparity.height != h || tg.labels.width != w || tg.labels.height != h)
    throw Error("render_l1_losses: target size does not match render");
  RenderLossResult r;
  r.d_color = ImageD(w, h, 3);
  r.d_disparity = ImageD(w, h, 1);
  r.d_segmentation = ImageD(w, h, nl);

  const double inv_color = 1.0 / (3.0 * w * h);
  for (std::size_t i = 0; i < out.color.data.size(); ++i) {
    const double d = out.color.data[i] - tg.rgb.data[i];
    r.photometric += std::abs(d);
    r.d_color.data[i] = sign(d) * inv_color;
  }
  r.photometric *= inv_color;

  std::size_t valid = 0;
  for (double v : tg.disparity.data) valid += v > 0.0;
  if (valid > 0) {
    const double inv = 1.0 / static_cast<double>(valid);
    for (std::size_t i = 0; i < out.disparity.data.size(); ++i) {
      if (!(tg.disparity.data[i] > 0.0)) continue;
      const double d = out.disparity.data[i] - tg.disparity.data[i];
      r.depth += std::abs(d);
      r.d_disparity.data[i] = sign(d) * inv;
    }
    r.depth *= inv;
  }

  const double inv_seg = 1.0 / (static_cast<double>(nl) * w * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int label = tg.labels.at(x, y);
      for (int c = 0; c < nl; ++c) {
        const double d = out.segmentation.at(x, y, c) - (c == label ? 1.0 : 0.0);
        r.segmentation += std::abs(d);
        r.d_segmentation.at(x, y, c) = sign(d) * inv_seg;
      }
    }
  }
  r.segmentation *= inv_seg;
  return r;
}

// ---------------------------------------------------------------------------

PairLossResult pair_isometry_loss(std::span<const Vec3> pi, std::span<const Vec3> pj,
                                  std::span<const std::pair<std::int32_t, std::int32_t>> pairs) {
  if (pi.size() != pj.size()) throw Error("isometry: position arrays differ in size");
  PairLossResult r;
  r.d_pos_i.assign(pi.size(), Vec3::Zero());
  r.d_pos_j.assign(pj.size(), Vec3::Zero());
  if (pairs.empty()) return r;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (const auto &[a, b] : pairs) {
    const Vec3 ui = pi[a] - pi[b], uj = pj[a] - pj[b];
    const double li = ui.norm(), lj = uj.norm();
    const double e = li - lj;
    r.value += inv * std::abs(e);
    const double c = inv * sign(e);
    if (li > 0.0) {
      const Vec3 g = c * ui / li;
      r.d_pos_i[a] += g;
      r.d_pos_i[b] -= g;
    }
    if (lj > 0.0) {
      const Vec3 g = c * uj / lj;
      r.d_pos_j[a] -= g;
      r.d_pos_j[b] += g;
    }
  }
  return r;
}

PairLossResult local_isometry_loss(std::span<const Vec3> pi, std::span<const Vec3> pj,
                                   const NeighborGraph &graph) {
  if (graph.size() != pi.size() && !(graph.k == 0 || pi.size() < 2))
    throw Error("local_isometry_loss: neighbor graph does not match marble count");
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  pairs.reserve(graph.neighbors.size());
  for (std::size_t a = 0; a < graph.size(); ++a)
    for (int k = 0; k < graph.k; ++k) {
      const std::int32_t b = graph.of(a)[k];
      if (b >= 0) pairs.emplace_back(static_cast<std::int32_t>(a), b);
    }
  return pair_isometry_loss(pi, pj, pairs);
}

std::vector<std::pair<std::int32_t, std::int32_t>> sample_instance_pairs(
    std::span<const int> instances, int sample_size, std::uint64_t seed) {
  std::map<int, std::vector<std::int32_t>> groups;
  for (std::size_t i = 0; i < instances.size(); ++i)
    groups[instances[i]].push_back(static_cast<std::int32_t>(i));
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  if (sample_size <= 0) return pairs;
  pairs.reserve(instances.size() * static_cast<std::size_t>(sample_size));
  Rng rng(seed);
  for (std::size_t a = 0; a < instances.size(); ++a) {
    const auto &g = groups[instances[a]];
    if (g.size() < 2) continue;
    for (int s = 0; s < sample_size; ++s) {
      // Uniform over the group minus `a`.
      auto pick = uniform_int(rng, 0, static_cast<std::int64_t>(g.size()) - 2);
      std::int32_t b = g[pick];
      if (b == static_cast<std::int32_t>(a)) b = g.back();
      pairs.emplace_back(static_cast<std::int32_t>(a), b);
    }
  }
  return pairs;
}

PairLossResult instance_isometry_loss(std::span<const Vec3> pi, std::span<const Vec3> pj,
                                      std::span<const int> instances, int sample_size,
                                      std::uint64_t seed) {
  if (instances.size() != pi.size()) throw Error("instance_isometry_loss: label count mismatch");
  const auto pairs = sample_instance_pairs(instances, sample_size, seed);
  return pair_isometry_loss(pi, pj, pairs);
}

// ---------------------------------------------------------------------------

TvLossResult depth_tv_loss(const RenderOutput &out, const ProjectedSplats &splats) {
  TvLossResult r;
  r.d_weight.assign(out.records.entries.size(), 0.0);
  r.d_depth.assign(splats.size(), 0.0);
  const std::size_t npix = static_cast<std::size_t>(out.width) * out.height;
  std::size_t active = 0;
  for (std::size_t p = 0; p < npix; ++p)
    if (out.records.end[p] > out.records.begin[p]) ++active;
  if (active == 0) return r;
  const double inv = 1.0 / static_cast<double>(active);

  for (std::size_t p = 0; p < npix; ++p) {
    const std::size_t b = out.records.begin[p], e = out.records.end[p];
    if (b == e) continue;
    double S = 0.0, Dbar = 0.0;
    for (std::size_t r_ = b; r_ < e; ++r_) {
      const Contribution &c = out.records.entries[r_];
      S += c.weight();
      Dbar += c.weight() * splats.splats[c.splat].depth;
    }
    if (!(S > 0.0)) continue;
    Dbar /= S;
    double Lp = 0.0, sbar = 0.0;
    for (std::size_t r_ = b; r_ < e; ++r_) {
      const Contribution &c = out.records.entries[r_];
      const double u = splats.splats[c.splat].depth - Dbar;
      const double wn = c.weight() / S;
      Lp += wn * std::abs(u);
      sbar += wn * sign(u);
    }
    r.value += inv * Lp;
    for (std::size_t r_ = b; r_ < e; ++r_) {
      const Contribution &c = out.records.entries[r_];
      const double u = splats.splats[c.splat].depth - Dbar;
      const double wn = c.weight() / S;
      r.d_depth[c.splat] += inv * wn * (sign(u) - sbar);
      r.d_weight[r_] = inv * (std::abs(u) - Lp - sbar * u) / S;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

ChamferResult chamfer_loss_halves(std::span<const Vec3> pos, std::span<const std::int32_t> ha,
                                  std::span<const std::int32_t> hb) {
  ChamferResult r;
  r.d_pos.assign(pos.size(), Vec3::Zero());
  if (ha.empty() || hb.empty()) return r;
  const double inv = 1.0 / static_cast<double>(ha.size() + hb.size());
  auto directed = [&](std::span<const std::int32_t> from, std::span<const std::int32_t> to) {
    std::vector<Vec3> pts(to.size());
    for (std::size_t i = 0; i < to.size(); ++i) pts[i] = pos[to[i]];
    const KdTree3 tree(std::move(pts));
    for (std::int32_t a : from) {
      const auto nb = tree.nearest(pos[a]);
      const std::int32_t b = to[nb.index];
      const Vec3 u = pos[a] - pos[b];
      const double d = u.norm();
      r.value += inv * d;
      if (d > 0.0) {
        const Vec3 g = inv * u / d;
        r.d_pos[a] += g;
        r.d_pos[b] -= g;
      }
    }
  };
  directed(ha, hb);
  directed(hb, ha);
  return r;
}

ChamferResult chamfer_loss(std::span<const Vec3> pos, std::uint64_t seed) {
  if (pos.size() < 2) {
    ChamferResult r;
    r.d_pos.assign(pos.size(), Vec3::Zero());
    return r;
  }
  std::vector<std::int32_t> perm(pos.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[uniform_int(rng, 0, static_cast<std::int64_t>(i))]);
  const std::size_t half = pos.size() / 2;
  return chamfer_loss_halves(pos, std::span(perm).subspan(0, half),
                             std::span(perm).subspan(half, half));
}

PairLossResult local_isometry_loss(const MarbleSet &set, int i, int j, const NeighborGraph &graph) {
  const auto pi = positions_at(set, i), pj = positions_at(set, j);
  return local_isometry_loss(pi, pj, graph);
}

PairLossResult instance_isometry_loss(const MarbleSet &set, int i, int j, int sample_size,
                                      std::uint64_t seed) {
  const auto pi = positions_at(set, i), pj = positions_at(set, j);
  std::vector<int> inst(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) inst[k] = set.marbles[k].instance;
  return instance_isometry_loss(pi, pj, inst, sample_size, seed);
}

ChamferResult chamfer_loss(const MarbleSet &set, int t, std::uint64_t seed) {
  const auto p = positions_at(set, t);
  return chamfer_loss(p, seed);
}

}  // namespace dgm
