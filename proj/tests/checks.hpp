#pragma once

#include "dgm/anisotropic.hpp"
#include "dgm/losses.hpp"
#include "dgm/objective.hpp"
#include "dgm/render.hpp"
#include "fd.hpp"
#include "support.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

// Randomized checks shared by the unit tests and the acceptance binary.
namespace dgm::test {

inline double max_abs_diff(const ImageD &a, const ImageD &b) {
  if (!a.same_shape(b)) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Tiled rasterizer against the brute-force oracle on one random scene.
inline double oracle_difference(std::uint64_t seed) {
  Rng rng(seed);
  const int n = static_cast<int>(uniform_int(rng, 10, 200));
  const int w = static_cast<int>(uniform_int(rng, 64, 320));
  const int h = static_cast<int>(uniform_int(rng, 64, 240));
  const MarbleSet set = random_set(rng, n, 2, 1, 3);
  Camera cam = test_camera(w, h, uniform(rng, 0.6, 1.4) * w);
  look_at(cam, uniform3(rng, -0.3, 0.3), Vec3(0, 0, 3));
  RenderConfig rc;
  rc.num_labels = 3;
  const ProjectedSplats sp = project(set, 2, cam, rc);
  const RenderOutput a = rasterize(sp, cam, rc), b = rasterize_oracle(sp, cam, rc);
  return std::max({max_abs_diff(a.color, b.color), max_abs_diff(a.disparity, b.disparity),
                   max_abs_diff(a.segmentation, b.segmentation), max_abs_diff(a.alpha, b.alpha)});
}

inline double coefficient(std::size_t a, std::size_t b) {
  return std::sin(0.37 * static_cast<double>(a) + 1.3 * static_cast<double>(b) + 0.2);
}

// Linear functional of every renderer output, including per-record weights,
// differentiated through projection to marble parameters.
inline FdReport renderer_fd(std::uint64_t seed) {
  Rng rng(seed);
  MarbleSet set = random_set(rng, static_cast<int>(uniform_int(rng, 10, 30)), 2, 1, 2);
  for (Marble &m : set.marbles) m.log_scale = std::log(uniform(rng, 0.08, 0.2));
  const Camera cam = test_camera(40, 32);
  const RenderConfig rc = smooth_config(2);
  const int t = 2;
  ImageD a(40, 32, 3), b(40, 32, 1), c(40, 32, 2);
  for (auto *im : {&a, &b, &c})
    for (double &v : im->data) v = uniform(rng, -1.0, 1.0);
  auto objective = [&]() {
    const ProjectedSplats sp = project(set, t, cam, rc);
    const RenderOutput out = rasterize(sp, cam, rc);
    double f = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) f += a.data[i] * out.color.data[i];
    for (std::size_t i = 0; i < b.data.size(); ++i) f += b.data[i] * out.disparity.data[i];
    for (std::size_t i = 0; i < c.data.size(); ++i) f += c.data[i] * out.segmentation.data[i];
    for (std::size_t p = 0; p < out.records.pixel_count(); ++p)
      for (const Contribution &e : out.records.at(p)) f += 0.1 * coefficient(p, e.splat) * e.weight();
    return f;
  };
  const ProjectedSplats sp = project(set, t, cam, rc);
  const RenderOutput out = rasterize(sp, cam, rc);
  std::vector<double> dw(out.records.entries.size());
  for (std::size_t p = 0; p < out.records.pixel_count(); ++p)
    for (std::uint32_t e = out.records.begin[p]; e < out.records.end[p]; ++e)
      dw[e] = 0.1 * coefficient(p, out.records.entries[e].splat);
  const SplatGrads sg = rasterize_backward(sp, out, a, b, c, dw, rc);
  MarbleGrads g = MarbleGrads::zeros_like(set);
  project_backward(set, t, cam, sp, sg, g);

  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Marble &m = set.marbles[i];
    const std::string id = "marble " + std::to_string(i);
    for (int d = 0; d < 3; ++d) {
      probes.push_back({id + " mu", &m.mu[d], g.mu[i][d]});
      probes.push_back({id + " dx", &m.delta_x[1][d], g.dx(i, 1)[d]});
      probes.push_back({id + " color", &m.color[d], g.color[i][d]});
    }
    probes.push_back({id + " log_scale", &m.log_scale, g.log_scale[i]});
    probes.push_back({id + " opacity", &m.opacity_logit, g.opacity_logit[i]});
  }
  return check_probes(objective, probes);
}

// Same functional through the anisotropic projection.
inline FdReport anisotropic_fd(std::uint64_t seed) {
  Rng rng(seed);
  MarbleSet base = random_set(rng, static_cast<int>(uniform_int(rng, 10, 25)), 1, 1, 2);
  std::vector<AnisoGaussian> gs = to_anisotropic(base);
  for (AnisoGaussian &g : gs) {
    g.quat = Vec4(uniform(rng, 0.5, 1.0), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
    g.log_scale = Vec3(std::log(uniform(rng, 0.05, 0.2)), std::log(uniform(rng, 0.05, 0.2)),
                       std::log(uniform(rng, 0.05, 0.2)));
  }
  const Camera cam = test_camera(40, 32);
  const RenderConfig rc = smooth_config(2);
  ImageD a(40, 32, 3);
  for (double &v : a.data) v = uniform(rng, -1.0, 1.0);
  auto objective = [&]() {
    const RenderOutput out = rasterize(project_anisotropic(gs, cam, rc), cam, rc);
    double f = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) f += a.data[i] * out.color.data[i];
    return f;
  };
  const ProjectedSplats sp = project_anisotropic(gs, cam, rc);
  const RenderOutput out = rasterize(sp, cam, rc);
  const SplatGrads sg = rasterize_backward(sp, out, a, {}, {}, {}, rc);
  AnisoGrads g(gs.size());
  project_anisotropic_backward(gs, cam, sp, sg, g);
  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const std::string id = "gaussian " + std::to_string(i);
    for (int d = 0; d < 3; ++d) {
      probes.push_back({id + " mu", &gs[i].mu[d], g.mu[i][d]});
      probes.push_back({id + " log_scale", &gs[i].log_scale[d], g.log_scale[i][d]});
    }
    for (int d = 0; d < 4; ++d) probes.push_back({id + " quat", &gs[i].quat[d], g.quat[i][d]});
    probes.push_back({id + " opacity", &gs[i].opacity_logit, g.opacity_logit[i]});
  }
  return check_probes(objective, probes);
}

// Random splats with visibility in both frames, for loss-level checks.
inline ProjectedSplats random_splats(Rng &rng, int n, int w, int h) {
  ProjectedSplats s;
  s.splats.resize(n);
  for (Splat &p : s.splats) {
    p.mean2d = Vec2(uniform(rng, 0, w), uniform(rng, 0, h));
    p.depth = uniform(rng, 1.0, 4.0);
    p.cov2d = Vec3(4, 0, 4);
    p.opacity = 0.5;
    p.visible = true;
  }
  return s;
}

inline FdReport tracking_fd(std::uint64_t seed) {
  Rng rng(seed);
  const int n = 60, w = 64, h = 48;
  ProjectedSplats src = random_splats(rng, n, w, h), dst = src;
  for (Splat &p : dst.splats) {
    p.mean2d += Vec2(uniform(rng, -3, 3), uniform(rng, -3, 3));
    p.depth *= uniform(rng, 0.9, 1.1);
  }
  std::vector<TrackPair> tracks;
  std::vector<std::vector<Contribution>> contrib;
  for (int q = 0; q < 12; ++q) {
    TrackPair tp;
    tp.source = Vec2(uniform(rng, 5, w - 5), uniform(rng, 5, h - 5));
    tp.target = tp.source + Vec2(uniform(rng, -3, 3), uniform(rng, -3, 3));
    tracks.push_back(tp);
    std::vector<Contribution> list;
    for (std::int32_t g : track_neighbors(src, dst, tp.source, 8))
      if (uniform(rng, 0, 1) < 0.8) list.push_back({g, uniform(rng, 0.1, 0.9), uniform(rng, 0.2, 1.0)});
    contrib.push_back(list);
  }
  auto objective = [&]() { return tracking_loss(src, dst, tracks, contrib, 8).value; };
  const TrackingLossResult r = tracking_loss(src, dst, tracks, contrib, 8);
  std::vector<FdProbe> probes;
  for (int i = 0; i < n; ++i) {
    const std::string id = "splat " + std::to_string(i);
    for (int d = 0; d < 2; ++d) {
      probes.push_back({id + " source mean", &src.splats[i].mean2d[d], r.d_mean_source[i][d]});
      probes.push_back({id + " target mean", &dst.splats[i].mean2d[d], r.d_mean_target[i][d]});
    }
    probes.push_back({id + " source depth", &src.splats[i].depth, r.d_depth_source[i]});
    probes.push_back({id + " target depth", &dst.splats[i].depth, r.d_depth_target[i]});
  }
  return check_probes(objective, probes);
}

inline std::vector<Vec3> random_points(Rng &rng, int n) {
  std::vector<Vec3> p(n);
  for (Vec3 &v : p) v = uniform3(rng, -1.0, 1.0);
  return p;
}

inline FdReport local_isometry_fd(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pi = random_points(rng, 80), pj = pi;
  for (Vec3 &v : pj) v += uniform3(rng, -0.1, 0.1);
  const NeighborGraph graph = build_neighbor_graph(pi, 6);
  auto objective = [&]() { return local_isometry_loss(pi, pj, graph).value; };
  const PairLossResult r = local_isometry_loss(pi, pj, graph);
  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < pi.size(); ++i)
    for (int d = 0; d < 3; ++d) {
      probes.push_back({"pos_i", &pi[i][d], r.d_pos_i[i][d]});
      probes.push_back({"pos_j", &pj[i][d], r.d_pos_j[i][d]});
    }
  return check_probes(objective, probes);
}

inline FdReport instance_isometry_fd(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> pi = random_points(rng, 60), pj = pi;
  for (Vec3 &v : pj) v += uniform3(rng, -0.2, 0.2);
  std::vector<int> inst(60);
  for (int &v : inst) v = static_cast<int>(uniform_int(rng, 0, 2));
  auto objective = [&]() { return instance_isometry_loss(pi, pj, inst, 10, seed).value; };
  const PairLossResult r = instance_isometry_loss(pi, pj, inst, 10, seed);
  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < pi.size(); ++i)
    for (int d = 0; d < 3; ++d) {
      probes.push_back({"pos_i", &pi[i][d], r.d_pos_i[i][d]});
      probes.push_back({"pos_j", &pj[i][d], r.d_pos_j[i][d]});
    }
  return check_probes(objective, probes);
}

inline FdReport chamfer_fd(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> p = random_points(rng, 100);
  auto objective = [&]() { return chamfer_loss(p, seed).value; };
  const ChamferResult r = chamfer_loss(p, seed);
  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int d = 0; d < 3; ++d) probes.push_back({"pos", &p[i][d], r.d_pos[i][d]});
  return check_probes(objective, probes);
}

// Depth TV with the contribution records held fixed: derivatives with
// respect to splat depth and to each record's local opacity.
inline FdReport depth_tv_fd(std::uint64_t seed) {
  Rng rng(seed);
  MarbleSet set = random_set(rng, 40, 1, 1, 2);
  const Camera cam = test_camera(40, 32);
  RenderConfig rc;
  rc.num_labels = 2;
  ProjectedSplats sp = project(set, 1, cam, rc);
  RenderOutput out = rasterize(sp, cam, rc);
  auto objective = [&]() { return depth_tv_loss(out, sp).value; };
  const TvLossResult r = depth_tv_loss(out, sp);
  std::vector<FdProbe> probes;
  for (std::size_t g = 0; g < sp.size(); ++g)
    if (sp.splats[g].visible) probes.push_back({"depth", &sp.splats[g].depth, r.d_depth[g]});
  for (std::size_t e = 0; e < out.records.entries.size(); e += 7) {
    Contribution &c = out.records.entries[e];
    probes.push_back({"alpha", &c.alpha, r.d_weight[e] * c.transmittance});
  }
  return check_probes(objective, probes);
}

inline FdReport render_l1_fd(std::uint64_t seed) {
  Rng rng(seed);
  const int w = 24, h = 20, nl = 3;
  RenderOutput out;
  out.width = w;
  out.height = h;
  out.num_labels = nl;
  out.color = ImageD(w, h, 3);
  out.disparity = ImageD(w, h, 1);
  out.segmentation = ImageD(w, h, nl);
  for (auto *im : {&out.color, &out.disparity, &out.segmentation})
    for (double &v : im->data) v = uniform(rng, 0.0, 1.0);
  ImageU8 rgb(w, h, 3);
  ImageF depth(w, h, 1);
  ImageU16 labels(w, h, 1);
  for (auto &v : rgb.data) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 255));
  for (auto &v : depth.data) v = uniform(rng, 0, 1) < 0.2 ? 0.0f : static_cast<float>(uniform(rng, 1.0, 5.0));
  for (auto &v : labels.data) v = static_cast<std::uint16_t>(uniform_int(rng, 0, nl - 1));
  const FrameTargets tg = make_targets(rgb, depth, labels);
  const RenderLossResult r = render_l1_losses(out, tg);
  auto objective = [&]() {
    const RenderLossResult v = render_l1_losses(out, tg);
    return v.photometric + 2.0 * v.depth + 3.0 * v.segmentation;
  };
  std::vector<FdProbe> probes;
  for (std::size_t i = 0; i < out.color.data.size(); ++i)
    probes.push_back({"color", &out.color.data[i], r.d_color.data[i]});
  for (std::size_t i = 0; i < out.disparity.data.size(); ++i)
    probes.push_back({"disparity", &out.disparity.data[i], 2.0 * r.d_disparity.data[i]});
  for (std::size_t i = 0; i < out.segmentation.data.size(); ++i)
    probes.push_back({"segmentation", &out.segmentation.data[i], 3.0 * r.d_segmentation.data[i]});
  return check_probes(objective, probes);
}

// ---------------------------------------------------------------------------
// Degenerate identities.

inline Mat3 random_rotation(Rng &rng) {
  const Vec3 axis = uniform3(rng, -1.0, 1.0).normalized();
  return Eigen::AngleAxisd(uniform(rng, -3.0, 3.0), axis).toRotationMatrix();
}

inline double rigid_local_isometry(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<Vec3> pi = random_points(rng, 200);
  const Mat3 r = random_rotation(rng);
  const Vec3 t = uniform3(rng, -2.0, 2.0);
  std::vector<Vec3> pj;
  for (const Vec3 &p : pi) pj.push_back(r * p + t);
  return local_isometry_loss(pi, pj, build_neighbor_graph(pi, 8)).value;
}

inline double rigid_instance_isometry(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<Vec3> pi = random_points(rng, 200);
  std::vector<int> inst(pi.size());
  for (int &v : inst) v = static_cast<int>(uniform_int(rng, 0, 3));
  std::vector<Mat3> r;
  std::vector<Vec3> t;
  for (int k = 0; k < 4; ++k) r.push_back(random_rotation(rng)), t.push_back(uniform3(rng, -2, 2));
  std::vector<Vec3> pj;
  for (std::size_t i = 0; i < pi.size(); ++i) pj.push_back(r[inst[i]] * pi[i] + t[inst[i]]);
  return instance_isometry_loss(pi, pj, inst, 16, seed).value;
}

inline double identical_halves_chamfer(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<Vec3> half = random_points(rng, 100);
  std::vector<Vec3> all = half;
  all.insert(all.end(), half.begin(), half.end());
  std::vector<std::int32_t> a(100), b(100);
  for (int i = 0; i < 100; ++i) a[i] = i, b[i] = 100 + i;
  return chamfer_loss_halves(all, a, b).value;
}

inline double uniform_depth_tv(std::uint64_t seed) {
  Rng rng(seed);
  MarbleSet set = random_set(rng, 60, 1, 1, 2);
  // Every center at camera depth 3, so every splat has depth exactly 3.
  for (Marble &m : set.marbles) m.mu.z() = 3.0;
  const Camera cam = test_camera(48, 40);
  RenderConfig rc;
  rc.num_labels = 2;
  const ProjectedSplats sp = project(set, 1, cam, rc);
  return depth_tv_loss(rasterize(sp, cam, rc), sp).value;
}

inline double static_tracking(std::uint64_t seed) {
  Rng rng(seed);
  const ProjectedSplats sp = random_splats(rng, 80, 64, 48);
  std::vector<TrackPair> tracks;
  std::vector<std::vector<Contribution>> contrib;
  for (int q = 0; q < 20; ++q) {
    const Vec2 p(uniform(rng, 0, 64), uniform(rng, 0, 48));
    tracks.push_back({p, p});
    std::vector<Contribution> list;
    for (std::int32_t g : track_neighbors(sp, sp, p, 8)) list.push_back({g, 0.5, 0.9});
    contrib.push_back(list);
  }
  return tracking_loss(sp, sp, tracks, contrib, 8).value;
}

}  // namespace dgm::test
