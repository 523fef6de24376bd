#include "dgm/objective.hpp"

#include "dgm/rng.hpp"

#include <algorithm>

namespace dgm {

ObjectiveContext::ObjectiveContext(const Sequence &sequence) : sequence_(&sequence) {
  targets_.reserve(sequence.frames.size());
  for (const FrameBundle &f : sequence.frames)
    targets_.push_back(make_targets(f.rgb, f.depth, f.seg));
}

std::vector<TrackPair> ObjectiveContext::track_pairs(int source, int target) const {
  std::vector<TrackPair> pairs;
  for (const PointTrack &track : sequence_->tracks) {
    const TrackEntry *a = track.at(source);
    const TrackEntry *b = track.at(target);
    if (a && b && a->visible && b->visible) pairs.push_back({a->position, b->position});
  }
  return pairs;
}

namespace {

template <typename V>
bool finite_all(const std::vector<V> &v) {
  if constexpr (std::is_floating_point_v<V>)
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  else
    return std::all_of(v.begin(), v.end(), [](const V &x) { return x.allFinite(); });
}

bool finite_image(const ImageD &im) { return finite_all(im.data); }

void check(const char *component, double value, bool gradients_finite) {
  if (!std::isfinite(value)) throw NonFiniteError(component, "loss value");
  if (!gradients_finite) throw NonFiniteError(component, "gradient");
}

void add_positions(MarbleGrads &g, int k, const std::vector<Vec3> &d, double w) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!d[i].isZero(0.0)) g.add_position(i, k, w * d[i]);
}

}  // namespace

ObjectiveResult evaluate_objective(const MarbleSet &set, const NeighborGraph &graph,
                                   const ObjectiveContext &context, int t, int source,
                                   std::uint64_t seed, const ObjectiveOptions &options,
                                   MarbleGrads *grads) {
  if (!set.covers(t) || !set.covers(source))
    throw Error("evaluate_objective: frame outside the set interval");
  const Sequence &seq = context.sequence();
  const LossWeights &w = options.weights;
  const Camera &cam_t = seq.frame(t).camera;
  RenderConfig rc = options.render;
  rc.num_labels = std::max(rc.num_labels, seq.num_labels());

  ObjectiveResult result;
  LossComponents &c = result.components;
  const std::size_t n = set.size();
  const int kt = t - set.first_frame, ks = source - set.first_frame;

  const ProjectedSplats proj_t = project(set, t, cam_t, rc);
  const RenderOutput out = rasterize(proj_t, cam_t, rc);

  const RenderLossResult l1 = render_l1_losses(out, context.targets(t));
  c.photometric = l1.photometric;
  c.depth = l1.depth;
  c.segmentation = l1.segmentation;
  check("photometric", c.photometric, finite_image(l1.d_color));
  check("depth", c.depth, finite_image(l1.d_disparity));
  check("segmentation", c.segmentation, finite_image(l1.d_segmentation));

  TvLossResult tv;
  TrackingLossResult tr;
  PairLossResult iso_local, iso_inst;
  ChamferResult ch;
  ProjectedSplats proj_s;
  if (!options.render_terms_only) {
    tv = depth_tv_loss(out, proj_t);
    c.tv_depth = tv.value;
    check("tv_depth", c.tv_depth, finite_all(tv.d_weight) && finite_all(tv.d_depth));

    const auto pairs = context.track_pairs(source, t);
    if (!pairs.empty()) {
      const Camera &cam_s = seq.frame(source).camera;
      proj_s = source == t ? proj_t : project(set, source, cam_s, rc);
      std::vector<Vec2> pix(pairs.size());
      for (std::size_t q = 0; q < pairs.size(); ++q) pix[q] = pairs[q].source;
      const auto contrib = composite_pixels(proj_s, cam_s, rc, pix);
      tr = tracking_loss(proj_s, proj_t, pairs, contrib, options.track_k);
      c.tracking = tr.value;
      check("tracking", c.tracking,
            finite_all(tr.d_mean_source) && finite_all(tr.d_mean_target) &&
                finite_all(tr.d_depth_source) && finite_all(tr.d_depth_target));
    }

    const auto pos_s = positions_at(set, source);
    const auto pos_t = source == t ? pos_s : positions_at(set, t);
    iso_local = local_isometry_loss(pos_s, pos_t, graph);
    c.iso_local = iso_local.value;
    check("iso_local", c.iso_local, finite_all(iso_local.d_pos_i) && finite_all(iso_local.d_pos_j));

    std::vector<int> inst(n);
    for (std::size_t i = 0; i < n; ++i) inst[i] = set.marbles[i].instance;
    iso_inst = instance_isometry_loss(pos_s, pos_t, inst, options.iso_samples,
                                      derive_seed(seed, {1}));
    c.iso_instance = iso_inst.value;
    check("iso_instance", c.iso_instance, finite_all(iso_inst.d_pos_i) && finite_all(iso_inst.d_pos_j));

    ch = chamfer_loss(pos_t, derive_seed(seed, {2}));
    c.chamfer = ch.value;
    check("chamfer", c.chamfer, finite_all(ch.d_pos));
  }
  result.total = total_objective(c, w);
  if (!std::isfinite(result.total)) throw NonFiniteError("total", "loss value");
  if (!grads) return result;

  // Image-space and record-space gradients at frame t.
  ImageD d_color(out.width, out.height, 3), d_disp(out.width, out.height, 1),
      d_seg(out.width, out.height, out.num_labels);
  for (std::size_t i = 0; i < d_color.data.size(); ++i) d_color.data[i] = w.photometric * l1.d_color.data[i];
  for (std::size_t i = 0; i < d_disp.data.size(); ++i) d_disp.data[i] = w.depth * l1.d_disparity.data[i];
  for (std::size_t i = 0; i < d_seg.data.size(); ++i) d_seg.data[i] = w.segmentation * l1.d_segmentation.data[i];
  std::vector<double> d_weight;
  const bool use_tv = !options.render_terms_only && w.tv_depth != 0.0;
  if (use_tv) {
    d_weight.resize(tv.d_weight.size());
    for (std::size_t i = 0; i < d_weight.size(); ++i) d_weight[i] = w.tv_depth * tv.d_weight[i];
  }
  SplatGrads sg = rasterize_backward(proj_t, out, d_color, d_disp, d_seg, d_weight, rc);
  if (use_tv)
    for (std::size_t i = 0; i < n; ++i) sg.depth[i] += w.tv_depth * tv.d_depth[i];

  const bool use_tracking = !options.render_terms_only && w.tracking != 0.0 && !tr.d_mean_target.empty();
  if (use_tracking) {
    for (std::size_t i = 0; i < n; ++i) {
      sg.mean2d[i] += w.tracking * tr.d_mean_target[i];
      sg.depth[i] += w.tracking * tr.d_depth_target[i];
    }
  }
  project_backward(set, t, cam_t, proj_t, sg, *grads);

  if (use_tracking) {
    SplatGrads ss(n);
    for (std::size_t i = 0; i < n; ++i) {
      ss.mean2d[i] = w.tracking * tr.d_mean_source[i];
      ss.depth[i] = w.tracking * tr.d_depth_source[i];
    }
    project_backward(set, source, seq.frame(source).camera, proj_s, ss, *grads);
  }

  if (!options.render_terms_only) {
    if (w.iso_local != 0.0) {
      add_positions(*grads, ks, iso_local.d_pos_i, w.iso_local);
      add_positions(*grads, kt, iso_local.d_pos_j, w.iso_local);
    }
    if (w.iso_instance != 0.0) {
      add_positions(*grads, ks, iso_inst.d_pos_i, w.iso_instance);
      add_positions(*grads, kt, iso_inst.d_pos_j, w.iso_instance);
    }
    if (w.chamfer != 0.0) add_positions(*grads, kt, ch.d_pos, w.chamfer);
  }
  return result;
}

}  // namespace dgm
