#include "dgm/eval.hpp"

#include "dgm/anisotropic.hpp"
#include "dgm/io.hpp"
#include "dgm/knn.hpp"
#include "dgm/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <string_view>

namespace dgm {

namespace {

template <typename T>
PsnrResult psnr_impl(const Image<T> &a, const Image<T> &b, double scale) {
  if (!a.same_shape(b)) throw Error("psnr: image shapes differ");
  if (a.data.empty()) throw Error("psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = (static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])) * scale;
    sum += d * d;
  }
  if (sum == 0.0) return {kIdenticalPsnr, true};
  const double mse = sum / static_cast<double>(a.data.size());
  return {10.0 * std::log10(1.0 / mse), false};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + mid));
}

double mean(const std::vector<double> &v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double mean_psnr(const std::vector<PsnrResult> &v) {
  double s = 0.0;
  for (const PsnrResult &p : v) s += p.db;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

ImageU8 side_by_side(const ImageU8 &a, const ImageU8 &b) {
  ImageU8 out(a.width + b.width, std::max(a.height, b.height), 3);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = a.at(x, y, c);
  for (int y = 0; y < b.height; ++y)
    for (int x = 0; x < b.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(a.width + x, y, c) = b.at(x, y, c);
  return out;
}

// Photometric L1 gradient only.
double photometric_grad(const ImageD &color, const ImageD &target, ImageD &d_color) {
  d_color = ImageD(color.width, color.height, 3);
  const double inv = 1.0 / static_cast<double>(color.data.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < color.data.size(); ++i) {
    const double d = color.data[i] - target.data[i];
    loss += std::abs(d);
    d_color.data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  return loss * inv;
}

ImageD to_unit(const ImageU8 &rgb) {
  ImageD out(rgb.width, rgb.height, rgb.channels);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) out.data[i] = rgb.data[i] / 255.0;
  return out;
}

void adam_vec(double *p, double *m, double *v, const double *g, int n, std::int64_t t, double lr,
              const OptimizerConfig &c) {
  for (int d = 0; d < n; ++d) p[d] += adam_delta(m[d], v[d], g[d], t, lr, c);
}

}  // namespace

PsnrResult psnr(const ImageD &image, const ImageD &reference) {
  for (const ImageD *im : {&image, &reference})
    for (double v : im->data)
      if (!(v >= 0.0 && v <= 1.0)) throw Error("psnr: values must lie in [0, 1]");
  return psnr_impl(image, reference, 1.0);
}

PsnrResult psnr(const ImageU8 &image, const ImageU8 &reference) {
  return psnr_impl(image, reference, 1.0 / 255.0);
}

double pck_t(std::span<const KeypointPrediction> predicted, std::span<const KeypointPair> truth,
             double threshold_fraction, double diagonal) {
  if (!(threshold_fraction >= 0.0) || !(diagonal > 0.0)) throw Error("pck_t: invalid threshold");
  std::map<int, Vec2> by_id;
  for (const KeypointPrediction &p : predicted) by_id[p.id] = p.position;
  const double thr = threshold_fraction * diagonal;
  std::size_t common = 0, correct = 0;
  for (const KeypointPair &k : truth) {
    const auto it = by_id.find(k.id);
    if (it == by_id.end()) continue;
    ++common;
    correct += (it->second - k.query).norm() <= thr;
  }
  if (common == 0) throw Error("pck_t: no common keypoints");
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<KeypointPrediction> transfer_keypoints(const TrainState &state,
                                                   std::span<const KeypointPair> keypoints,
                                                   int k_neighbors) {
  std::vector<KeypointPrediction> out;
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const KeypointPair &k = keypoints[i];
    if (k.source_frame < 1 || k.source_frame > state.num_frames || k.query_frame < 1 ||
        k.query_frame > state.num_frames)
      throw Error("transfer_keypoints: keypoint frame out of range");
    groups[{k.source_frame, k.query_frame}].push_back(i);
  }
  const RenderConfig &rc = state.config.render;
  for (const auto &[frames, members] : groups) {
    const auto [sf, qf] = frames;
    const SetState &s = state.set_for(sf);
    if (!s.set.covers(qf)) continue;
    const Camera &cam_s = state.cameras.at(sf - 1), &cam_q = state.cameras.at(qf - 1);
    const ProjectedSplats src = project(s.set, sf, cam_s, rc);
    const ProjectedSplats dst = qf == sf ? src : project(s.set, qf, cam_q, rc);
    std::vector<std::int32_t> ids;
    std::vector<Vec2> pts;
    for (std::size_t g = 0; g < src.size(); ++g)
      if (src.splats[g].visible && dst.splats[g].visible) {
        ids.push_back(static_cast<std::int32_t>(g));
        pts.push_back(src.splats[g].mean2d);
      }
    if (ids.empty()) continue;
    const KdTree2 tree(pts);
    std::vector<Vec2> pix;
    for (std::size_t i : members) pix.push_back(keypoints[i].source);
    const auto contrib = composite_pixels(src, cam_s, rc, pix);
    for (std::size_t q = 0; q < members.size(); ++q) {
      const Vec2 &p = pix[q];
      Vec2 acc = Vec2::Zero(), acc_uniform = Vec2::Zero();
      double wsum = 0.0;
      const auto nbs = tree.knn(p, k_neighbors);
      for (const auto &nb : nbs) {
        const std::int32_t g = ids[nb.index];
        const Splat &a = src.splats[g], &b = dst.splats[g];
        const Vec2 moved = b.mean2d + (p - a.mean2d) * (a.depth / b.depth);
        double w = 0.0;
        for (const Contribution &c : contrib[q])
          if (c.splat == g) {
            w = c.weight();
            break;
          }
        acc += w * moved;
        wsum += w;
        acc_uniform += moved;
      }
      const Vec2 pred = wsum > 0.0 ? Vec2(acc / wsum) : Vec2(acc_uniform / static_cast<double>(nbs.size()));
      out.push_back({keypoints[members[q]].id, pred});
    }
  }
  return out;
}

TrajectoryStats trajectory_error(const MarbleSet &predicted, const MarbleSet &truth) {
  if (truth.empty()) throw Error("trajectory_error: no ground truth");
  if (predicted.empty()) throw Error("trajectory_error: no predicted marbles");
  const int f0 = truth.first_frame;
  if (!predicted.covers(f0)) throw Error("trajectory_error: prediction does not cover the first ground-truth frame");
  const int f1 = std::min(truth.last_frame, predicted.last_frame);
  const KdTree3 tree(positions_at(predicted, f0));
  std::vector<double> endpoint, per_frame;
  endpoint.reserve(truth.size());
  per_frame.reserve(truth.size());
  for (const Marble &g : truth.marbles) {
    const Vec3 start = position_at(g, truth.first_frame, f0);
    const Marble &m = predicted.marbles[tree.nearest(start).index];
    double sum = 0.0;
    double last = 0.0;
    for (int t = f0; t <= f1; ++t) {
      last = (position_at(m, predicted.first_frame, t) - position_at(g, truth.first_frame, t)).norm();
      sum += last;
    }
    endpoint.push_back(last);
    per_frame.push_back(sum / static_cast<double>(f1 - f0 + 1));
  }
  TrajectoryStats s;
  s.count = truth.size();
  s.median_endpoint = median(endpoint);
  s.mean_endpoint = mean(endpoint);
  s.median_per_frame = median(per_frame);
  s.mean_per_frame = mean(per_frame);
  return s;
}

TrajectoryStats trajectory_error(const TrainState &state, const MarbleSet &truth) {
  if (truth.empty()) throw Error("trajectory_error: no ground truth");
  return trajectory_error(state.set_for(truth.first_frame).set, truth);
}

EvalReport evaluate(const TrainState &state, const Sequence &sequence, const EvalConfig &config) {
  const auto t0 = std::chrono::steady_clock::now();
  if (sequence.num_frames() != state.num_frames)
    throw Error("evaluate: sequence has " + std::to_string(sequence.num_frames()) +
                " frames, checkpoint " + std::to_string(state.num_frames));
  EvalReport r;
  for (int f = 1; f <= state.num_frames; ++f) {
    const RenderOutput out = render_at(state, f, state.cameras.at(f - 1));
    r.frame_psnr.push_back(psnr(to_rgb8(out.color), sequence.frame(f).rgb));
  }
  r.mean_psnr = mean_psnr(r.frame_psnr);
  for (const NovelView &v : sequence.novel_views) {
    const RenderOutput out = render_at(state, v.frame, v.camera);
    r.novel_psnr.push_back(psnr(to_rgb8(out.color), v.rgb));
  }
  r.mean_novel_psnr = mean_psnr(r.novel_psnr);
  r.pck_threshold = config.pck_threshold;
  if (!sequence.keypoints.empty()) {
    const auto pred = transfer_keypoints(state, sequence.keypoints, config.pck_k);
    if (!pred.empty())
      r.pck = pck_t(pred, sequence.keypoints, config.pck_threshold, state.cameras.front().diagonal());
    else
      r.pck = 0.0;
  }
  if (sequence.gt_marbles && !sequence.gt_marbles->empty())
    r.trajectory = trajectory_error(state, *sequence.gt_marbles);
  RunConfig rc;
  rc.train = state.config;
  rc.eval = config;
  r.config_hash = fnv1a(format_config(rc));
  r.iterations = state.iterations;
  r.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string format_report_table(std::span<const EvalReport> reports) {
  std::ostringstream s;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %10s %10s %8s %12s %12s %10s %10s\n", "run", "psnr",
                "novel", "pck", "traj_med", "traj_mean", "train_s", "iters");
  s << line;
  for (const EvalReport &r : reports) {
    std::snprintf(line, sizeof line, "%-20s %10.3f %10.3f %8s %12s %12s %10.1f %10lld\n",
                  r.name.c_str(), r.mean_psnr, r.mean_novel_psnr,
                  r.pck ? (std::to_string(*r.pck).substr(0, 6)).c_str() : "-",
                  r.trajectory ? std::to_string(r.trajectory->median_per_frame).c_str() : "-",
                  r.trajectory ? std::to_string(r.trajectory->mean_per_frame).c_str() : "-",
                  r.train_seconds, static_cast<long long>(r.iterations));
    s << line;
  }
  return s.str();
}

std::string format_report_csv(std::span<const EvalReport> reports) {
  std::ostringstream s;
  s.precision(10);
  s << "run,mean_psnr,mean_novel_psnr,pck,pck_threshold,traj_median_endpoint,traj_mean_endpoint,"
       "traj_median_per_frame,traj_mean_per_frame,config_hash,train_seconds,eval_seconds,iterations,"
       "frame_psnr,novel_psnr\n";
  auto list = [](const std::vector<PsnrResult> &v) {
    std::ostringstream o;
    o.precision(8);
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? ";" : "") << (v[i].identical ? std::string("identical") : std::to_string(v[i].db));
    return o.str();
  };
  for (const EvalReport &r : reports) {
    s << r.name << ',' << r.mean_psnr << ',' << r.mean_novel_psnr << ',';
    if (r.pck) s << *r.pck;
    s << ',' << r.pck_threshold << ',';
    if (r.trajectory)
      s << r.trajectory->median_endpoint << ',' << r.trajectory->mean_endpoint << ','
        << r.trajectory->median_per_frame << ',' << r.trajectory->mean_per_frame;
    else
      s << ",,,";
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
    s << ',' << hash << ',' << r.train_seconds << ',' << r.eval_seconds << ',' << r.iterations << ','
      << list(r.frame_psnr) << ',' << list(r.novel_psnr) << '\n';
  }
  return s.str();
}

void write_comparison_strips(const std::filesystem::path &dir, const TrainState &state,
                             const Sequence &sequence) {
  std::filesystem::create_directories(dir);
  for (int f = 1; f <= state.num_frames; ++f) {
    const RenderOutput out = render_at(state, f, state.cameras.at(f - 1));
    write_png_rgb(dir / ("frame_" + frame_name(f, ".png")),
                  side_by_side(to_rgb8(out.color), sequence.frame(f).rgb));
  }
  for (const NovelView &v : sequence.novel_views) {
    const RenderOutput out = render_at(state, v.frame, v.camera);
    char name[64];
    std::snprintf(name, sizeof name, "novel_%05d_%02d.png", v.frame, v.view);
    write_png_rgb(dir / name, side_by_side(to_rgb8(out.color), v.rgb));
  }
}

// ---------------------------------------------------------------------------

double IsotropyResult::iso_novel_mean() const { return mean(iso_novel); }
double IsotropyResult::aniso_novel_mean() const { return mean(aniso_novel); }

IsotropyResult isotropy_experiment(const FrameBundle &frame, std::span<const Camera> novel_cameras,
                                   std::span<const ImageU8> novel_images,
                                   const IsotropyOptions &o) {
  if (novel_cameras.size() != novel_images.size())
    throw Error("isotropy_experiment: one image per novel camera is required");
  o.optim.validate();
  InitOptions init;
  init.target_count = o.marbles;
  init.seed = o.seed;
  init.init_opacity = o.init_opacity;
  MarbleSet set = init_marbles_from_frame(frame, frame.camera, init);
  std::vector<AnisoGaussian> aniso = to_anisotropic(set);
  const int t = set.first_frame;
  const Camera &cam = frame.camera;
  const RenderConfig &rc = o.render;
  const ImageD target = to_unit(frame.rgb);

  AdamState adam = AdamState::zeros_like(set);
  const ParamGroups groups = configure_phase(ParamGroups{}, Phase::init, 1);
  ImageD d_color;
  for (int it = 0; it < o.iterations; ++it) {
    const ProjectedSplats sp = project(set, t, cam, rc);
    const RenderOutput out = rasterize(sp, cam, rc);
    photometric_grad(out.color, target, d_color);
    const SplatGrads sg = rasterize_backward(sp, out, d_color, {}, {}, {}, rc);
    MarbleGrads mg = MarbleGrads::zeros_like(set);
    project_backward(set, t, cam, sp, sg, mg);
    step(set, mg, groups, adam, o.optim);
  }

  const std::size_t n = aniso.size();
  struct Moments {
    std::vector<double> m, v;
    explicit Moments(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
  };
  Moments m_mu(3 * n), m_quat(4 * n), m_scale(3 * n), m_color(3 * n), m_op(n);
  const OptimizerConfig &c = o.optim;
  const double min_log_scale = std::log(c.min_scale);
  for (int it = 0; it < o.iterations; ++it) {
    const ProjectedSplats sp = project_anisotropic(aniso, cam, rc);
    const RenderOutput out = rasterize(sp, cam, rc);
    photometric_grad(out.color, target, d_color);
    const SplatGrads sg = rasterize_backward(sp, out, d_color, {}, {}, {}, rc);
    AnisoGrads ag(n);
    project_anisotropic_backward(aniso, cam, sp, sg, ag);
    const std::int64_t step_no = it + 1;
    const double decay = std::pow(c.lr_decay, static_cast<double>(it));
    for (std::size_t i = 0; i < n; ++i) {
      AnisoGaussian &g = aniso[i];
      adam_vec(g.mu.data(), &m_mu.m[3 * i], &m_mu.v[3 * i], ag.mu[i].data(), 3, step_no, c.lr.mu * decay, c);
      adam_vec(g.quat.data(), &m_quat.m[4 * i], &m_quat.v[4 * i], ag.quat[i].data(), 4, step_no,
               o.lr_rotation * decay, c);
      adam_vec(g.log_scale.data(), &m_scale.m[3 * i], &m_scale.v[3 * i], ag.log_scale[i].data(), 3,
               step_no, c.lr.log_scale * decay, c);
      adam_vec(g.color.data(), &m_color.m[3 * i], &m_color.v[3 * i], ag.color[i].data(), 3, step_no,
               c.lr.color * decay, c);
      adam_vec(&g.opacity_logit, &m_op.m[i], &m_op.v[i], &ag.opacity_logit[i], 1, step_no,
               c.lr.opacity * decay, c);
      g.log_scale = g.log_scale.cwiseMax(min_log_scale);
      if (!g.mu.allFinite() || !g.quat.allFinite() || !g.log_scale.allFinite() ||
          !g.color.allFinite() || !std::isfinite(g.opacity_logit))
        throw NonFiniteError("photometric", "anisotropic parameter");
    }
  }

  IsotropyResult r;
  r.frame = frame.index;
  r.iso_train = psnr(to_rgb8(rasterize(project(set, t, cam, rc), cam, rc).color), frame.rgb).db;
  r.aniso_train = psnr(to_rgb8(rasterize(project_anisotropic(aniso, cam, rc), cam, rc).color), frame.rgb).db;
  for (std::size_t v = 0; v < novel_cameras.size(); ++v) {
    const Camera &nc = novel_cameras[v];
    r.iso_novel.push_back(psnr(to_rgb8(rasterize(project(set, t, nc, rc), nc, rc).color), novel_images[v]).db);
    r.aniso_novel.push_back(
        psnr(to_rgb8(rasterize(project_anisotropic(aniso, nc, rc), nc, rc).color), novel_images[v]).db);
  }
  return r;
}

IsotropyResult isotropy_experiment(const Sequence &sequence, int frame, const IsotropyOptions &options) {
  const FrameBundle &fb = sequence.frame(frame);
  std::vector<Camera> cams;
  std::vector<ImageU8> images;
  for (const NovelView &v : sequence.novel_views)
    if (v.frame == frame) {
      cams.push_back(v.camera);
      images.push_back(v.rgb);
    }
  return isotropy_experiment(fb, cams, images, options);
}

// ---------------------------------------------------------------------------

const char *ablation_name(Ablation a) {
  switch (a) {
    case Ablation::segmentation: return "no_segmentation";
    case Ablation::tracking: return "no_tracking";
    case Ablation::isometry: return "no_isometry";
    case Ablation::motion_estimation: return "no_motion_estimation";
    case Ablation::global_adjustment: return "no_global_adjustment";
  }
  return "?";
}

Ablation parse_ablation(const std::string &name) {
  const std::string key = name.rfind("no_", 0) == 0 ? name.substr(3) : name;
  for (Ablation a : kAllAblations)
    if (key == std::string_view(ablation_name(a)).substr(3)) return a;
  throw Error("unknown ablation '" + name + "'");
}

TrainConfig apply_ablation(TrainConfig config, Ablation a) {
  switch (a) {
    case Ablation::segmentation: config.weights.segmentation = 0.0; break;
    case Ablation::tracking: config.weights.tracking = 0.0; break;
    case Ablation::isometry:
      config.weights.iso_local = 0.0;
      config.weights.iso_instance = 0.0;
      break;
    case Ablation::motion_estimation: config.eta = 0; break;
    case Ablation::global_adjustment: config.beta = 0; break;
  }
  return config;
}

std::vector<AblationCase> standard_ablations(std::span<const Ablation> toggles) {
  std::vector<AblationCase> cases{{"full", {}}};
  for (Ablation a : toggles) cases.push_back({ablation_name(a), {a}});
  return cases;
}

std::vector<EvalReport> ablation_run(const Sequence &sequence, const RunConfig &base,
                                     std::span<const AblationCase> cases, TrainObserver *observer) {
  std::vector<EvalReport> reports;
  for (const AblationCase &c : cases) {
    RunConfig rc = base;
    for (Ablation a : c.toggles) rc.train = apply_ablation(rc.train, a);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainState state = train(sequence, rc.train, observer);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EvalReport r = evaluate(state, sequence, rc.eval);
    r.name = c.name;
    r.train_seconds = seconds;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace dgm
