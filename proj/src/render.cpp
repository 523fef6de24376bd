#include "dgm/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

namespace dgm {

MarbleGrads MarbleGrads::zeros_like(const MarbleSet &set) {
  MarbleGrads g;
  const std::size_t n = set.size();
  g.length = set.length();
  g.mu.assign(n, Vec3::Zero());
  g.delta_x.assign(n * static_cast<std::size_t>(g.length), Vec3::Zero());
  g.log_scale.assign(n, 0.0);
  g.color.assign(n, Vec3::Zero());
  g.opacity_logit.assign(n, 0.0);
  return g;
}

void MarbleGrads::add(const MarbleGrads &o, double w) {
  for (std::size_t i = 0; i < mu.size(); ++i) {
    mu[i] += w * o.mu[i];
    log_scale[i] += w * o.log_scale[i];
    color[i] += w * o.color[i];
    opacity_logit[i] += w * o.opacity_logit[i];
  }
  for (std::size_t i = 0; i < delta_x.size(); ++i) delta_x[i] += w * o.delta_x[i];
}

void MarbleGrads::set_zero() {
  std::fill(mu.begin(), mu.end(), Vec3::Zero());
  std::fill(delta_x.begin(), delta_x.end(), Vec3::Zero());
  std::fill(log_scale.begin(), log_scale.end(), 0.0);
  std::fill(color.begin(), color.end(), Vec3::Zero());
  std::fill(opacity_logit.begin(), opacity_logit.end(), 0.0);
}

bool MarbleGrads::all_finite() const {
  for (const auto &v : mu) if (!v.allFinite()) return false;
  for (const auto &v : delta_x) if (!v.allFinite()) return false;
  for (const auto &v : color) if (!v.allFinite()) return false;
  for (double v : log_scale) if (!std::isfinite(v)) return false;
  for (double v : opacity_logit) if (!std::isfinite(v)) return false;
  return true;
}

namespace detail {

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera &camera, const Vec3 &c) {
  const double iz = 1.0 / c.z();
  Eigen::Matrix<double, 2, 3> j;
  j << camera.fx * iz, 0.0, -camera.fx * c.x() * iz * iz,
       0.0, camera.fy * iz, -camera.fy * c.y() * iz * iz;
  return j;
}

Vec3 jacobian_backward(const Camera &camera, const Vec3 &c,
                       const Eigen::Matrix<double, 2, 3> &dj) {
  const double iz = 1.0 / c.z(), iz2 = iz * iz, iz3 = iz2 * iz;
  const double fx = camera.fx, fy = camera.fy;
  Vec3 g;
  g.x() = dj(0, 2) * (-fx * iz2);
  g.y() = dj(1, 2) * (-fy * iz2);
  g.z() = dj(0, 0) * (-fx * iz2) + dj(0, 2) * (2.0 * fx * c.x() * iz3) +
          dj(1, 1) * (-fy * iz2) + dj(1, 2) * (2.0 * fy * c.y() * iz3);
  return g;
}

Vec3 mean_depth_backward(const Camera &camera, const Vec3 &c, const Vec2 &dm, double dd) {
  const double iz = 1.0 / c.z();
  return {dm.x() * camera.fx * iz, dm.y() * camera.fy * iz,
          dd - dm.x() * camera.fx * c.x() * iz * iz - dm.y() * camera.fy * c.y() * iz * iz};
}

namespace {
struct PixelRange {
  int x0, x1, y0, y1;
  bool empty() const { return x0 > x1 || y0 > y1; }
};

// Pixels whose centers fall inside the axis-aligned box of the cutoff ellipse.
PixelRange pixel_range(const Splat &s, int width, int height, double cutoff) {
  const double rx = cutoff * std::sqrt(s.cov2d.x());
  const double ry = cutoff * std::sqrt(s.cov2d.z());
  const double fx0 = std::ceil(s.mean2d.x() - rx - 0.5), fx1 = std::floor(s.mean2d.x() + rx - 0.5);
  const double fy0 = std::ceil(s.mean2d.y() - ry - 0.5), fy1 = std::floor(s.mean2d.y() + ry - 0.5);
  PixelRange r;
  r.x0 = static_cast<int>(std::max(0.0, fx0));
  r.x1 = static_cast<int>(std::min(double(width - 1), fx1));
  r.y0 = static_cast<int>(std::max(0.0, fy0));
  r.y1 = static_cast<int>(std::min(double(height - 1), fy1));
  if (fx1 < 0.0 || fy1 < 0.0 || fx0 > width - 1 || fy0 > height - 1) r.x0 = 1, r.x1 = 0;
  return r;
}
}  // namespace

bool cull(Splat &s, const Camera &camera, const RenderConfig &config) {
  s.visible = false;
  if (!(s.depth > config.near_plane)) return false;
  if (!s.mean2d.allFinite() || !s.cov2d.allFinite()) return false;
  if (s.cov2d.x() * s.cov2d.z() - s.cov2d.y() * s.cov2d.y() <= 0.0) return false;
  if (pixel_range(s, camera.width, camera.height, config.cutoff_sigma).empty()) return false;
  s.visible = true;
  return true;
}

}  // namespace detail

ProjectedSplats project(const MarbleSet &set, int t, const Camera &camera,
                        const RenderConfig &config) {
  if (!set.covers(t)) throw std::out_of_range("project: frame outside set interval");
  ProjectedSplats out;
  out.frame = t;
  out.splats.resize(set.size());
  const int k = t - set.first_frame;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(set.size()); ++i) {
    const Marble &m = set.marbles[i];
    Splat &s = out.splats[i];
    s.cam = camera.to_camera(m.mu + m.delta_x[k]);
    s.depth = s.cam.z();
    s.color = m.color;
    s.opacity = m.opacity();
    s.instance = m.instance;
    if (!(s.depth > config.near_plane)) {
      s.visible = false;
      continue;
    }
    s.mean2d = camera.project(s.cam);
    const auto j = detail::projection_jacobian(camera, s.cam);
    const double s2 = std::exp(2.0 * m.log_scale);
    const Mat2 cov = s2 * (j * j.transpose());
    s.cov2d = Vec3(cov(0, 0) + config.cov_floor, cov(0, 1), cov(1, 1) + config.cov_floor);
    detail::cull(s, camera, config);
  }
  return out;
}

namespace {

struct Prepared {
  Vec2 mean = Vec2::Zero();
  Vec3 conic = Vec3::Zero();  // inverse covariance (p00, p01, p11)
  double opacity = 0.0;
  detail::PixelRange range{1, 0, 1, 0};
};

std::vector<Prepared> prepare(const ProjectedSplats &splats, const Camera &camera,
                              const RenderConfig &config, std::vector<std::int32_t> &order) {
  std::vector<Prepared> prep(splats.size());
  std::vector<std::pair<double, std::int32_t>> keys;
  keys.reserve(splats.size());
  order.clear();
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat &s = splats.splats[i];
    if (!s.visible) continue;
    const double det = s.cov2d.x() * s.cov2d.z() - s.cov2d.y() * s.cov2d.y();
    if (!(det > 0.0)) continue;
    prep[i].mean = s.mean2d;
    prep[i].conic = Vec3(s.cov2d.z() / det, -s.cov2d.y() / det, s.cov2d.x() / det);
    prep[i].opacity = s.opacity;
    prep[i].range = detail::pixel_range(s, camera.width, camera.height, config.cutoff_sigma);
    if (prep[i].range.empty()) continue;
    keys.emplace_back(s.depth, static_cast<std::int32_t>(i));
  }
  std::sort(keys.begin(), keys.end());
  order.reserve(keys.size());
  for (const auto &k : keys) order.push_back(k.second);
  return prep;
}

TileBins bin_tiles(const std::vector<Prepared> &prep, const std::vector<std::int32_t> &order,
                   const Camera &camera, int tile_size) {
  TileBins bins;
  bins.tile_size = tile_size;
  bins.tiles_x = (camera.width + tile_size - 1) / tile_size;
  bins.tiles_y = (camera.height + tile_size - 1) / tile_size;
  const int nt = bins.tile_count();
  std::vector<std::uint32_t> count(nt + 1, 0);
  for (std::int32_t i : order) {
    const auto &r = prep[i].range;
    for (int ty = r.y0 / tile_size; ty <= r.y1 / tile_size; ++ty)
      for (int tx = r.x0 / tile_size; tx <= r.x1 / tile_size; ++tx) ++count[ty * bins.tiles_x + tx];
  }
  bins.offsets.assign(nt + 1, 0);
  for (int t = 0; t < nt; ++t) bins.offsets[t + 1] = bins.offsets[t] + count[t];
  bins.splats.resize(bins.offsets[nt]);
  std::vector<std::uint32_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::int32_t i : order) {
    const auto &r = prep[i].range;
    for (int ty = r.y0 / tile_size; ty <= r.y1 / tile_size; ++ty)
      for (int tx = r.x0 / tile_size; tx <= r.x1 / tile_size; ++tx)
        bins.splats[cursor[ty * bins.tiles_x + tx]++] = i;
  }
  return bins;
}

// Tile-local copy of a prepared splat.
struct Candidate {
  Vec2 mean;
  Vec3 conic;
  double opacity;
  detail::PixelRange range;
  std::int32_t index;
};

// Mahalanobis distance squared of pixel (x, y) from a candidate splat.
inline double mahalanobis2(const Candidate &p, int x, int y) {
  const double dx = x + 0.5 - p.mean.x();
  const double dy = y + 0.5 - p.mean.y();
  return p.conic.x() * dx * dx + 2.0 * p.conic.y() * dx * dy + p.conic.z() * dy * dy;
}

void init_output(RenderOutput &out, const Camera &camera, const RenderConfig &config) {
  out.width = camera.width;
  out.height = camera.height;
  out.num_labels = config.num_labels;
  out.color = ImageD(camera.width, camera.height, 3);
  out.disparity = ImageD(camera.width, camera.height, 1);
  out.segmentation = ImageD(camera.width, camera.height, config.num_labels);
  out.alpha = ImageD(camera.width, camera.height, 1);
  out.records.width = camera.width;
  out.records.begin.assign(out.color.pixel_count(), 0);
  out.records.end.assign(out.color.pixel_count(), 0);
}

// Composites one pixel over a depth-ordered candidate list. Appends records
// (and the candidate slot of each record) and writes the pixel's images.
void composite_pixel(const ProjectedSplats &splats, std::span<const Candidate> candidates, int x,
                     int y, const RenderConfig &config, std::vector<Contribution> &records,
                     std::vector<std::int32_t> *slots, RenderOutput *out) {
  const double cutoff2 = config.cutoff_sigma * config.cutoff_sigma;
  double T = 1.0;
  Vec3 color = Vec3::Zero();
  double disp = 0.0;
  double *seg = out ? &out->segmentation.at(x, y, 0) : nullptr;
  const std::int32_t n = static_cast<std::int32_t>(candidates.size());
  for (std::int32_t slot = 0; slot < n; ++slot) {
    const Candidate &p = candidates[slot];
    if (x < p.range.x0 || x > p.range.x1 || y < p.range.y0 || y > p.range.y1) continue;
    const double q = mahalanobis2(p, x, y);
    if (q > cutoff2) continue;
    const double w = p.opacity * std::exp(-0.5 * q);
    const double weight = w * T;
    records.push_back({p.index, w, T});
    if (slots) slots->push_back(slot);
    if (out) {
      const Splat &s = splats.splats[p.index];
      color += weight * s.color;
      disp += weight / s.depth;
      if (s.instance >= 0 && s.instance < config.num_labels) seg[s.instance] += weight;
    }
    T *= 1.0 - w;
    if (T < config.min_transmittance) break;
  }
  if (out) {
    for (int c = 0; c < 3; ++c) out->color.at(x, y, c) = color[c];
    out->disparity.at(x, y) = disp;
    out->alpha.at(x, y) = 1.0 - T;
  }
}

void gather_candidates(const std::vector<Prepared> &prep, std::span<const std::int32_t> list,
                       std::vector<Candidate> &out) {
  out.resize(list.size());
  for (std::size_t k = 0; k < list.size(); ++k) {
    const Prepared &p = prep[list[k]];
    out[k] = {p.mean, p.conic, p.opacity, p.range, list[k]};
  }
}

// Composites a tile splat by splat. Each pixel sees the same depth-ordered
// sequence of operations as composite_pixel, so results match bit for bit.
void composite_tile(const ProjectedSplats &splats, std::span<const Candidate> candidates, int x0,
                    int x1, int y0, int y1, const RenderConfig &config,
                    std::vector<Contribution> &records, std::vector<std::int32_t> &slots,
                    RenderOutput &out) {
  const double cutoff2 = config.cutoff_sigma * config.cutoff_sigma;
  const int tw = x1 - x0, th = y1 - y0, np = tw * th;
  struct PixelState {
    double T = 1.0;
    Vec3 color = Vec3::Zero();
    double disp = 0.0;
    bool done = false;
  };
  const std::int32_t n = static_cast<std::int32_t>(candidates.size());
  thread_local std::vector<PixelState> px;
  thread_local std::vector<Contribution> recs;  // np x n, one row per pixel
  thread_local std::vector<std::int32_t> sl;
  thread_local std::vector<std::int32_t> len;
  px.assign(np, PixelState{});
  len.assign(np, 0);
  const std::size_t cap = std::max<std::size_t>(1, static_cast<std::size_t>(n));
  if (recs.size() < np * cap) recs.resize(np * cap), sl.resize(np * cap);
  int active = np;
  for (std::int32_t slot = 0; slot < n && active > 0; ++slot) {
    const Candidate &p = candidates[slot];
    const int bx0 = std::max(x0, p.range.x0), bx1 = std::min(x1 - 1, p.range.x1);
    const int by0 = std::max(y0, p.range.y0), by1 = std::min(y1 - 1, p.range.y1);
    const Splat *s = nullptr;
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        const int l = (y - y0) * tw + (x - x0);
        PixelState &ps = px[l];
        if (ps.done) continue;
        const double q = mahalanobis2(p, x, y);
        if (q > cutoff2) continue;
        if (!s) s = &splats.splats[p.index];
        const double w = p.opacity * std::exp(-0.5 * q);
        const double weight = w * ps.T;
        const std::size_t r = l * cap + len[l]++;
        recs[r] = {p.index, w, ps.T};
        sl[r] = slot;
        ps.color += weight * s->color;
        ps.disp += weight / s->depth;
        if (s->instance >= 0 && s->instance < config.num_labels)
          out.segmentation.at(x, y, s->instance) += weight;
        ps.T *= 1.0 - w;
        if (ps.T < config.min_transmittance) ps.done = true, --active;
      }
    }
  }
  std::size_t total = records.size();
  for (int l = 0; l < np; ++l) total += len[l];
  if (records.capacity() < total) records.reserve(std::max(total, 2 * records.capacity()));
  if (slots.capacity() < total) slots.reserve(std::max(total, 2 * slots.capacity()));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int l = (y - y0) * tw + (x - x0);
      const PixelState &ps = px[l];
      for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = ps.color[c];
      out.disparity.at(x, y) = ps.disp;
      out.alpha.at(x, y) = 1.0 - ps.T;
      const std::size_t p = static_cast<std::size_t>(y) * out.width + x;
      out.records.begin[p] = static_cast<std::uint32_t>(records.size());
      records.insert(records.end(), recs.begin() + l * cap, recs.begin() + l * cap + len[l]);
      slots.insert(slots.end(), sl.begin() + l * cap, sl.begin() + l * cap + len[l]);
      out.records.end[p] = static_cast<std::uint32_t>(records.size());
    }
  }
}

}  // namespace

RenderOutput rasterize(const ProjectedSplats &splats, const Camera &camera,
                       const RenderConfig &config) {
  std::vector<std::int32_t> order;
  const auto prep = prepare(splats, camera, config, order);
  RenderOutput out;
  init_output(out, camera, config);
  out.bins = bin_tiles(prep, order, camera, config.tile_size);
  const TileBins &bins = out.bins;
  const int nt = bins.tile_count(), ts = bins.tile_size;
  auto tile_box = [&](int t, int &x0, int &x1, int &y0, int &y1) {
    const int tx = t % bins.tiles_x, ty = t / bins.tiles_x;
    x0 = tx * ts, y0 = ty * ts;
    x1 = std::min(camera.width, x0 + ts), y1 = std::min(camera.height, y0 + ts);
  };
  if (omp_get_max_threads() == 1) {
    std::vector<Candidate> list;
    for (int t = 0; t < nt; ++t) {
      int x0, x1, y0, y1;
      tile_box(t, x0, x1, y0, y1);
      gather_candidates(prep, bins.tile(t), list);
      composite_tile(splats, list, x0, x1, y0, y1, config, out.records.entries, out.record_slot, out);
    }
    return out;
  }
  std::vector<std::vector<Contribution>> tile_records(nt);
  std::vector<std::vector<std::int32_t>> tile_slots(nt);
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < nt; ++t) {
    int x0, x1, y0, y1;
    tile_box(t, x0, x1, y0, y1);
    std::vector<Candidate> list;
    gather_candidates(prep, bins.tile(t), list);
    composite_tile(splats, list, x0, x1, y0, y1, config, tile_records[t], tile_slots[t], out);
  }
  std::size_t total = 0;
  for (const auto &r : tile_records) total += r.size();
  out.records.entries.reserve(total);
  out.record_slot.reserve(total);
  for (int t = 0; t < nt; ++t) {
    const auto base = static_cast<std::uint32_t>(out.records.entries.size());
    int x0, x1, y0, y1;
    tile_box(t, x0, x1, y0, y1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        out.records.begin[p] += base;
        out.records.end[p] += base;
      }
    out.records.entries.insert(out.records.entries.end(), tile_records[t].begin(), tile_records[t].end());
    out.record_slot.insert(out.record_slot.end(), tile_slots[t].begin(), tile_slots[t].end());
  }
  return out;
}

RenderOutput rasterize_oracle(const ProjectedSplats &splats, const Camera &camera,
                              const RenderConfig &config) {
  std::vector<std::int32_t> order;
  const auto prep = prepare(splats, camera, config, order);
  RenderOutput out;
  init_output(out, camera, config);
  const int w = camera.width, h = camera.height;
  std::vector<std::vector<Contribution>> row_records(h);
  std::vector<std::vector<std::uint32_t>> row_counts(h);
#pragma omp parallel for schedule(dynamic, 1)
  for (int y = 0; y < h; ++y) {
    std::vector<std::int32_t> rows;
    for (std::int32_t i : order)
      if (y >= prep[i].range.y0 && y <= prep[i].range.y1) rows.push_back(i);
    std::vector<Candidate> row;
    gather_candidates(prep, rows, row);
    for (int x = 0; x < w; ++x) {
      const std::size_t before = row_records[y].size();
      composite_pixel(splats, row, x, y, config, row_records[y], nullptr, &out);
      row_counts[y].push_back(static_cast<std::uint32_t>(row_records[y].size() - before));
    }
  }
  std::uint32_t next = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      out.records.begin[p] = next;
      next += row_counts[y][x];
      out.records.end[p] = next;
    }
  out.records.entries.reserve(next);
  for (int y = 0; y < h; ++y)
    out.records.entries.insert(out.records.entries.end(), row_records[y].begin(), row_records[y].end());
  return out;
}

RenderOutput render_oracle(const MarbleSet &set, int t, const Camera &camera,
                           const RenderConfig &config) {
  return rasterize_oracle(project(set, t, camera, config), camera, config);
}

std::vector<std::vector<Contribution>> composite_pixels(const ProjectedSplats &splats,
                                                        const Camera &camera,
                                                        const RenderConfig &config,
                                                        std::span<const Vec2> pixels) {
  std::vector<std::int32_t> order;
  const auto prep = prepare(splats, camera, config, order);
  const TileBins bins = bin_tiles(prep, order, camera, config.tile_size);
  std::vector<std::vector<Contribution>> result(pixels.size());
  std::vector<Candidate> list;
  int cached = -1;
  for (std::size_t q = 0; q < pixels.size(); ++q) {
    const int x = std::clamp(static_cast<int>(std::floor(pixels[q].x())), 0, camera.width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(pixels[q].y())), 0, camera.height - 1);
    const int tile = (y / bins.tile_size) * bins.tiles_x + x / bins.tile_size;
    if (tile != cached) gather_candidates(prep, bins.tile(tile), list), cached = tile;
    composite_pixel(splats, list, x, y, config, result[q], nullptr, nullptr);
  }
  return result;
}

SplatGrads rasterize_backward(const ProjectedSplats &splats, const RenderOutput &output,
                              const ImageD &d_color, const ImageD &d_disparity,
                              const ImageD &d_segmentation, std::span<const double> d_weight,
                              const RenderConfig &config) {
  const TileBins &bins = output.bins;
  if (bins.offsets.empty() || output.record_slot.size() != output.records.entries.size())
    throw Error("rasterize_backward: output lacks tile bookkeeping (oracle renders are forward-only)");
  const bool has_dw = !d_weight.empty();
  if (has_dw && d_weight.size() != output.records.entries.size())
    throw Error("rasterize_backward: d_weight size does not match contribution records");
  const bool has_seg = !d_segmentation.data.empty();
  const bool has_disp = !d_disparity.data.empty();
  const bool has_color = !d_color.data.empty();

  // Inverse covariances, recomputed exactly as in the forward pass.
  std::vector<Vec3> conic(splats.size(), Vec3::Zero());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Vec3 &c = splats.splats[i].cov2d;
    const double det = c.x() * c.z() - c.y() * c.y();
    if (det > 0.0) conic[i] = Vec3(c.z() / det, -c.y() / det, c.x() / det);
  }

  struct Partial {
    Vec2 mean = Vec2::Zero();
    Vec3 conic = Vec3::Zero();  // dL/dP00, dL/dP01 (either off-diagonal), dL/dP11
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    double depth = 0.0;
  };

  const int nt = bins.tile_count(), ts = bins.tile_size, w = output.width, h = output.height;
  std::vector<std::vector<Partial>> partials(nt);

#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < nt; ++t) {
    const auto list = bins.tile(t);
    auto &part = partials[t];
    part.assign(list.size(), Partial{});
    const int tx = t % bins.tiles_x, ty = t / bins.tiles_x;
    const int x0 = tx * ts, y0 = ty * ts;
    const int x1 = std::min(w, x0 + ts), y1 = std::min(h, y0 + ts);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const std::size_t begin = output.records.begin[p], end = output.records.end[p];
        if (begin == end) continue;
        const Vec3 dc = has_color ? Vec3(d_color.at(x, y, 0), d_color.at(x, y, 1), d_color.at(x, y, 2))
                                  : Vec3::Zero();
        const double dd = has_disp ? d_disparity.at(x, y) : 0.0;
        const double *ds = has_seg ? &d_segmentation.at(x, y, 0) : nullptr;
        double acc = 0.0;  // sum over later records of G_m * alpha'_m / T_{k+1}
        for (std::size_t r = end; r-- > begin;) {
          const Contribution &rec = output.records.entries[r];
          const Splat &s = splats.splats[rec.splat];
          Partial &pg = part[output.record_slot[r]];
          const double weight = rec.weight();
          double g = dc.dot(s.color) + dd / s.depth;
          if (ds && s.instance >= 0 && s.instance < config.num_labels) g += ds[s.instance];
          if (has_dw) g += d_weight[r];
          pg.color += weight * dc;
          pg.depth += -dd * weight / (s.depth * s.depth);
          const double d_alpha = rec.transmittance * (g - acc);
          acc = g * rec.alpha + acc * (1.0 - rec.alpha);
          // alpha = opacity * exp(-q / 2)
          const double gauss = s.opacity > 0.0 ? rec.alpha / s.opacity : 0.0;
          pg.opacity += d_alpha * gauss;
          const double dq = -0.5 * rec.alpha * d_alpha;
          const double px = x + 0.5 - s.mean2d.x(), py = y + 0.5 - s.mean2d.y();
          const Vec3 &P = conic[rec.splat];
          // q = P00 px^2 + 2 P01 px py + P11 py^2,  d/dmean = -dq/d(px, py)
          pg.mean.x() -= dq * 2.0 * (P.x() * px + P.y() * py);
          pg.mean.y() -= dq * 2.0 * (P.y() * px + P.z() * py);
          pg.conic += dq * Vec3(px * px, px * py, py * py);
        }
      }
    }
  }

  SplatGrads grads(splats.size());
  for (int t = 0; t < nt; ++t) {
    const auto list = bins.tile(t);
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::int32_t i = list[k];
      const Partial &pg = partials[t][k];
      grads.mean2d[i] += pg.mean;
      grads.color[i] += pg.color;
      grads.opacity[i] += pg.opacity;
      grads.depth[i] += pg.depth;
      grads.cov2d[i] += pg.conic;  // converted below
    }
  }
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Vec3 m = grads.cov2d[i];
    if (m.isZero(0.0)) continue;
    const Vec3 &p = conic[i];
    Mat2 P;
    P << p.x(), p.y(), p.y(), p.z();
    Mat2 M;
    M << m.x(), m.y(), m.y(), m.z();
    const Mat2 dS = -P * M * P;
    grads.cov2d[i] = Vec3(dS(0, 0), 2.0 * dS(0, 1), dS(1, 1));
  }
  return grads;
}

void project_backward(const MarbleSet &set, int t, const Camera &camera,
                      const ProjectedSplats &splats, const SplatGrads &grads, MarbleGrads &out,
                      double scale) {
  const int k = t - set.first_frame;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Splat &s = splats.splats[i];
    if (!s.visible) continue;
    const Marble &m = set.marbles[i];
    Vec3 d_cam = detail::mean_depth_backward(camera, s.cam, grads.mean2d[i], grads.depth[i]);
    const Vec3 &gc = grads.cov2d[i];
    if (!gc.isZero(0.0)) {
      Mat2 G;
      G << gc.x(), 0.5 * gc.y(), 0.5 * gc.y(), gc.z();
      const auto J = detail::projection_jacobian(camera, s.cam);
      const double s2 = std::exp(2.0 * m.log_scale);
      const Eigen::Matrix<double, 2, 3> dJ = 2.0 * s2 * G * J;
      d_cam += detail::jacobian_backward(camera, s.cam, dJ);
      const double d_s2 = (G.array() * (J * J.transpose()).array()).sum();
      out.log_scale[i] += scale * 2.0 * s2 * d_s2;
    }
    out.add_position(i, k, scale * (camera.rotation.transpose() * d_cam));
    out.color[i] += scale * grads.color[i];
    out.opacity_logit[i] += scale * grads.opacity[i] * s.opacity * (1.0 - s.opacity);
  }
}

void median_depth_and_label(const RenderOutput &output, const ProjectedSplats &splats,
                            ImageF &depth, ImageU16 &labels) {
  depth = ImageF(output.width, output.height, 1, 0.0f);
  labels = ImageU16(output.width, output.height, 1, 0);
  for (int y = 0; y < output.height; ++y) {
    for (int x = 0; x < output.width; ++x) {
      double acc = 0.0;
      for (const Contribution &c : output.records.at(x, y)) {
        acc += c.weight();
        if (acc >= 0.5) {
          const Splat &s = splats.splats[c.splat];
          depth.at(x, y) = static_cast<float>(s.depth);
          labels.at(x, y) = static_cast<std::uint16_t>(std::max(0, s.instance));
          break;
        }
      }
    }
  }
}

}  // namespace dgm
