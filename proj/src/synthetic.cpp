#include "dgm/synthetic.hpp"

#include "dgm/io.hpp"
#include "dgm/rng.hpp"

#include "json.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dgm {

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw Error("scene: image must be at least 8 x 8");
  if (frames < 1) throw Error("scene: at least one frame required");
  if (!(focal > 0.0)) throw Error("scene: focal length must be positive");
  if (primitives.empty()) throw Error("scene: no primitives");
  for (const Primitive &p : primitives) {
    if (p.marbles < 1) throw Error("scene: primitive needs at least one marble");
    if (p.instance < 0) throw Error("scene: negative instance label");
    if (p.kind == PrimitiveKind::sphere && !(p.radius > 0.0)) throw Error("scene: sphere radius must be positive");
    if (p.kind == PrimitiveKind::plane && !(p.half_extent.minCoeff() > 0.0))
      throw Error("scene: plane extents must be positive");
    if (!(p.period > 0.0)) throw Error("scene: motion period must be positive");
    if (static_cast<std::size_t>(p.instance) >= std::max<std::size_t>(labels.size(), 1))
      throw Error("scene: instance " + std::to_string(p.instance) + " has no label");
  }
  if (!(marble_opacity > 0.0 && marble_opacity < 1.0)) throw Error("scene: marble opacity must lie in (0, 1)");
  if (!(marble_scale > 0.0)) throw Error("scene: marble scale must be positive");
  if (track_grid < 0 || keypoint_grid < 0 || track_seed_every < 1 || keypoint_stride < 2 || novel_every < 1)
    throw Error("scene: invalid track or keypoint layout");
}

SceneSpec default_scene_spec() {
  SceneSpec s;
  s.labels = {"void", "background", "sphere"};
  Primitive plane;
  plane.kind = PrimitiveKind::plane;
  plane.center = Vec3(0, 0, 4.5);
  plane.half_extent = Vec2(1.9, 1.4);
  plane.instance = 1;
  plane.marbles = 3000;
  plane.texture = TextureKind::waves;
  plane.color_a = Vec3(0.85, 0.7, 0.35);
  plane.color_b = Vec3(0.15, 0.3, 0.55);
  plane.texture_scale = 2.2;
  Primitive ball;
  ball.kind = PrimitiveKind::sphere;
  ball.center = Vec3(-0.35, 0.05, 3.0);
  ball.radius = 0.6;
  ball.instance = 2;
  ball.marbles = 1000;
  ball.texture = TextureKind::stripes;
  ball.color_a = Vec3(0.9, 0.2, 0.15);
  ball.color_b = Vec3(0.95, 0.9, 0.8);
  ball.texture_scale = 3.0;
  ball.velocity = Vec3(0.03, 0.0, 0.0);
  ball.amplitude = Vec3(0.0, 0.08, 0.0);
  ball.period = 24.0;
  ball.spin_axis = Vec3(0, 1, 0);
  ball.spin_degrees = 3.0;
  s.primitives = {plane, ball};
  s.eye = Vec3(-0.1, 0, 0);
  s.eye_velocity = Vec3(0.01, 0, 0);
  s.target = Vec3(0, 0, 3.0);
  s.pivot = Vec3(0, 0, 3.0);
  return s;
}

namespace {

Vec3 vec3_of(const nlohmann::json &j) {
  if (!j.is_array() || j.size() != 3) throw Error("scene: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

SceneSpec parse_scene_spec(const std::string &text) {
  if (text == "default") return default_scene_spec();
  SceneSpec s = default_scene_spec();
  try {
    const auto j = nlohmann::json::parse(text);
    static const char *known[] = {"width", "height", "frames", "focal", "primitives", "labels", "eye",
                                  "eye_velocity", "target", "pivot", "novel_degrees", "novel_every",
                                  "marble_opacity", "marble_scale", "track_grid", "track_seed_every",
                                  "keypoint_grid", "keypoint_stride"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find_if(std::begin(known), std::end(known), [&](const char *k) { return it.key() == k; }) ==
          std::end(known))
        throw Error("scene: unknown field '" + it.key() + "'");
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.frames = j.value("frames", s.frames);
    s.focal = j.value("focal", s.focal);
    if (j.contains("labels")) s.labels = j["labels"].get<std::vector<std::string>>();
    if (j.contains("eye")) s.eye = vec3_of(j["eye"]);
    if (j.contains("eye_velocity")) s.eye_velocity = vec3_of(j["eye_velocity"]);
    if (j.contains("target")) s.target = vec3_of(j["target"]);
    if (j.contains("pivot")) s.pivot = vec3_of(j["pivot"]);
    if (j.contains("novel_degrees")) s.novel_degrees = j["novel_degrees"].get<std::vector<double>>();
    s.novel_every = j.value("novel_every", s.novel_every);
    s.marble_opacity = j.value("marble_opacity", s.marble_opacity);
    s.marble_scale = j.value("marble_scale", s.marble_scale);
    s.track_grid = j.value("track_grid", s.track_grid);
    s.track_seed_every = j.value("track_seed_every", s.track_seed_every);
    s.keypoint_grid = j.value("keypoint_grid", s.keypoint_grid);
    s.keypoint_stride = j.value("keypoint_stride", s.keypoint_stride);
    if (j.contains("primitives")) {
      s.primitives.clear();
      for (const auto &pj : j["primitives"]) {
        Primitive p;
        const std::string kind = pj.at("kind").get<std::string>();
        if (kind == "plane") p.kind = PrimitiveKind::plane;
        else if (kind == "sphere") p.kind = PrimitiveKind::sphere;
        else throw Error("scene: unknown primitive kind '" + kind + "'");
        if (pj.contains("center")) p.center = vec3_of(pj["center"]);
        if (pj.contains("half_extent"))
          p.half_extent = Vec2(pj["half_extent"].at(0).get<double>(), pj["half_extent"].at(1).get<double>());
        p.radius = pj.value("radius", p.radius);
        p.instance = pj.value("instance", p.instance);
        p.marbles = pj.value("marbles", p.marbles);
        const std::string tex = pj.value("texture", std::string("checker"));
        if (tex == "checker") p.texture = TextureKind::checker;
        else if (tex == "stripes") p.texture = TextureKind::stripes;
        else if (tex == "waves") p.texture = TextureKind::waves;
        else throw Error("scene: unknown texture '" + tex + "'");
        if (pj.contains("color_a")) p.color_a = vec3_of(pj["color_a"]);
        if (pj.contains("color_b")) p.color_b = vec3_of(pj["color_b"]);
        p.texture_scale = pj.value("texture_scale", p.texture_scale);
        if (pj.contains("velocity")) p.velocity = vec3_of(pj["velocity"]);
        if (pj.contains("amplitude")) p.amplitude = vec3_of(pj["amplitude"]);
        p.period = pj.value("period", p.period);
        if (pj.contains("spin_axis")) p.spin_axis = vec3_of(pj["spin_axis"]);
        p.spin_degrees = pj.value("spin_degrees", p.spin_degrees);
        s.primitives.push_back(p);
      }
    }
  } catch (const nlohmann::json::exception &e) {
    throw Error(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

SceneSpec load_scene_spec(const std::string &path_or_default) {
  if (path_or_default == "default") return default_scene_spec();
  std::ifstream in(path_or_default);
  if (!in) throw Error("cannot open scene spec " + path_or_default);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

RigidPose primitive_pose(const Primitive &p, int frame) {
  const double f = frame - 1;
  RigidPose pose;
  if (p.spin_degrees != 0.0)
    pose.rotation = Eigen::AngleAxisd(p.spin_degrees * f * std::numbers::pi / 180.0,
                                      p.spin_axis.normalized())
                        .toRotationMatrix();
  pose.translation = p.center + p.velocity * f;
  if (!p.amplitude.isZero(0.0)) pose.translation += p.amplitude * std::sin(2.0 * std::numbers::pi * f / p.period);
  return pose;
}

Camera synthetic_camera(const SceneSpec &spec, int frame) {
  Camera cam = make_camera(spec.width, spec.height, spec.focal);
  look_at(cam, spec.eye + spec.eye_velocity * (frame - 1), spec.target);
  return cam;
}

namespace {

struct BodyPoint {
  Vec3 q;   // body coordinates relative to the rest center
  Vec2 uv;  // texture coordinates
  double spacing;
};

std::vector<BodyPoint> lattice(const Primitive &p, Rng &rng) {
  std::vector<BodyPoint> pts;
  if (p.kind == PrimitiveKind::plane) {
    const double w = 2 * p.half_extent.x(), h = 2 * p.half_extent.y();
    const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(p.marbles * w / h))));
    const int ny = std::max(1, p.marbles / nx);
    const double dx = w / nx, dy = h / ny;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double jx = (uniform01(rng) - 0.5) * 0.3 * dx, jy = (uniform01(rng) - 0.5) * 0.3 * dy;
        const Vec3 q(-p.half_extent.x() + (i + 0.5) * dx + jx, -p.half_extent.y() + (j + 0.5) * dy + jy, 0.0);
        pts.push_back({q, Vec2(q.x(), q.y()), std::sqrt(dx * dy)});
      }
  } else {
    const int n = p.marbles;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double spacing = std::sqrt(4.0 * std::numbers::pi * p.radius * p.radius / n);
    for (int i = 0; i < n; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / n;
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double th = golden * i;
      const Vec3 dir(r * std::cos(th), y, r * std::sin(th));
      const double lon = std::atan2(dir.z(), dir.x()), lat = std::asin(std::clamp(dir.y(), -1.0, 1.0));
      pts.push_back({p.radius * dir, Vec2(lon * p.radius, lat * p.radius), spacing});
    }
  }
  return pts;
}

Vec3 texture(const Primitive &p, const Vec2 &uv) {
  double t = 0.0;
  const double k = p.texture_scale;
  switch (p.texture) {
    case TextureKind::checker:
      t = (static_cast<long>(std::floor(uv.x() * k)) + static_cast<long>(std::floor(uv.y() * k))) % 2 == 0 ? 1.0 : 0.0;
      break;
    case TextureKind::stripes:
      t = 0.5 + 0.5 * std::sin(2.0 * k * uv.x() / std::max(p.radius, 1e-9));
      break;
    case TextureKind::waves:
      t = 0.5 + 0.25 * std::sin(k * uv.x()) + 0.25 * std::sin(k * 1.3 * uv.y() + 0.7 * std::cos(k * uv.x()));
      break;
  }
  return p.color_b + t * (p.color_a - p.color_b);
}

struct GroundTruth {
  MarbleSet set;
  std::vector<std::vector<BodyPoint>> body;  // per primitive
};

GroundTruth build_ground_truth(const SceneSpec &spec, std::uint64_t seed) {
  GroundTruth gt;
  gt.set.first_frame = 1;
  gt.set.last_frame = spec.frames;
  Rng rng(derive_seed(seed, {11}));
  for (const Primitive &p : spec.primitives) {
    auto pts = lattice(p, rng);
    const RigidPose rest = primitive_pose(p, 1);
    for (const BodyPoint &b : pts) {
      Marble m;
      m.mu = rest.rotation * b.q + rest.translation;
      m.log_scale = std::log(spec.marble_scale * b.spacing);
      m.color = texture(p, b.uv);
      m.opacity_logit = logit(spec.marble_opacity);
      m.instance = p.instance;
      m.delta_x.assign(spec.frames, Vec3::Zero());
      for (int f = 2; f <= spec.frames; ++f) {
        const RigidPose pose = primitive_pose(p, f);
        m.delta_x[f - 1] = (pose.rotation * b.q + pose.translation) - m.mu;
      }
      gt.set.marbles.push_back(std::move(m));
    }
    gt.body.push_back(std::move(pts));
  }
  return gt;
}

struct FrameTruth {
  Camera camera;
  ImageF depth;
  ImageU16 labels;
};

// Surface point of the primitive with `instance` hit along a pixel ray, in
// body coordinates; picks the primitive whose surface is nearest to `world`.
bool body_point_of(const SceneSpec &spec, int instance, int frame, const Vec3 &world, int &prim, Vec3 &q) {
  double best = 1e300;
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    const Primitive &p = spec.primitives[i];
    if (p.instance != instance) continue;
    const RigidPose pose = primitive_pose(p, frame);
    Vec3 b = pose.rotation.transpose() * (world - pose.translation);
    double err;
    if (p.kind == PrimitiveKind::plane) {
      err = std::abs(b.z());
      b.z() = 0.0;
    } else {
      err = std::abs(b.norm() - p.radius);
      b = b.normalized() * p.radius;
    }
    if (err < best) {
      best = err;
      prim = static_cast<int>(i);
      q = b;
    }
  }
  return best < 1e300;
}

// Pixel position and visibility of body point q of primitive `prim` at frame f.
bool observe(const SceneSpec &spec, const FrameTruth &ft, int prim, const Vec3 &q, int f, Vec2 &pix) {
  const Primitive &p = spec.primitives[prim];
  const RigidPose pose = primitive_pose(p, f);
  const Vec3 cam = ft.camera.to_camera(pose.rotation * q + pose.translation);
  if (!(cam.z() > 1e-6)) {
    pix = Vec2(-1, -1);
    return false;
  }
  pix = ft.camera.project(cam);
  if (!(pix.x() >= 0 && pix.y() >= 0 && pix.x() < spec.width && pix.y() < spec.height)) return false;
  const int x = static_cast<int>(pix.x()), y = static_cast<int>(pix.y());
  const double d = ft.depth.at(x, y);
  if (!(d > 0.0) || ft.labels.at(x, y) != p.instance) return false;
  return std::abs(cam.z() - d) < 0.04 * d + 0.02;
}

}  // namespace

Sequence generate_synthetic(const SceneSpec &spec, std::uint64_t seed) {
  spec.validate();
  Sequence seq;
  seq.labels = spec.labels;
  if (seq.labels.empty()) seq.labels = {"background"};
  RenderConfig rc = spec.render;
  rc.num_labels = static_cast<int>(seq.labels.size());
  GroundTruth gt = build_ground_truth(spec, seed);

  std::vector<FrameTruth> truth(spec.frames);
  for (int f = 1; f <= spec.frames; ++f) {
    FrameTruth &ft = truth[f - 1];
    ft.camera = synthetic_camera(spec, f);
    const ProjectedSplats sp = project(gt.set, f, ft.camera, rc);
    const RenderOutput out = rasterize_oracle(sp, ft.camera, rc);
    median_depth_and_label(out, sp, ft.depth, ft.labels);
    FrameBundle fb;
    fb.index = f;
    fb.rgb = to_rgb8(out.color);
    fb.depth = ft.depth;
    fb.seg = ft.labels;
    fb.camera = ft.camera;
    seq.frames.push_back(std::move(fb));
  }

  // Surface anchors seeded on a pixel grid, exact under the primitive motion.
  auto anchor = [&](int f, const Vec2 &pix, int &prim, Vec3 &q) {
    const FrameTruth &ft = truth[f - 1];
    const int x = static_cast<int>(pix.x()), y = static_cast<int>(pix.y());
    const double d = ft.depth.at(x, y);
    if (!(d > 0.0)) return false;
    const Vec3 world = ft.camera.to_world(ft.camera.unproject(pix.x(), pix.y(), d));
    return body_point_of(spec, ft.labels.at(x, y), f, world, prim, q);
  };

  int track_id = 0;
  for (int f0 = 1; f0 <= spec.frames; f0 += spec.track_seed_every) {
    for (int gy = 0; gy < spec.track_grid; ++gy)
      for (int gx = 0; gx < spec.track_grid; ++gx) {
        const Vec2 pix((gx + 0.5) * spec.width / spec.track_grid, (gy + 0.5) * spec.height / spec.track_grid);
        int prim = -1;
        Vec3 q;
        if (!anchor(f0, pix, prim, q)) continue;
        PointTrack track;
        track.id = track_id++;
        for (int f = 1; f <= spec.frames; ++f) {
          TrackEntry e;
          e.frame = f;
          e.visible = observe(spec, truth[f - 1], prim, q, f, e.position);
          if (!e.position.allFinite()) e.position = Vec2(-1, -1);
          track.entries.push_back(e);
        }
        seq.tracks.push_back(std::move(track));
      }
  }

  int kp_id = 0;
  for (int s = 1; s <= spec.frames; s += spec.keypoint_stride) {
    for (int gy = 0; gy < spec.keypoint_grid; ++gy)
      for (int gx = 0; gx < spec.keypoint_grid; ++gx) {
        const Vec2 pix((gx + 0.25) * spec.width / spec.keypoint_grid, (gy + 0.25) * spec.height / spec.keypoint_grid);
        int prim = -1;
        Vec3 q;
        if (!anchor(s, pix, prim, q)) continue;
        for (int f = s + 1; f < std::min(spec.frames + 1, s + spec.keypoint_stride); ++f) {
          Vec2 qp;
          if (!observe(spec, truth[f - 1], prim, q, f, qp)) continue;
          seq.keypoints.push_back({kp_id++, s, pix, f, qp});
        }
      }
  }

  for (int f = 1; f <= spec.frames; f += spec.novel_every) {
    for (std::size_t v = 0; v < spec.novel_degrees.size(); ++v) {
      NovelView nv;
      nv.frame = f;
      nv.view = static_cast<int>(v);
      nv.camera = orbit(truth[f - 1].camera, spec.pivot, spec.novel_degrees[v]);
      nv.rgb = to_rgb8(render_oracle(gt.set, f, nv.camera, rc).color);
      seq.novel_views.push_back(std::move(nv));
    }
  }

  seq.gt_marbles = std::move(gt.set);
  seq.validate();
  return seq;
}

}  // namespace dgm
