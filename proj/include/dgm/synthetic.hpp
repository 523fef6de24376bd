#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"
#include "dgm/marbles.hpp"
#include "dgm/render.hpp"
#include "dgm/sequence.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dgm {

enum class PrimitiveKind { plane, sphere };
enum class TextureKind { checker, stripes, waves };

// A rigid primitive. Planes face -z (toward a camera looking down +z) and
// span center +- half_extent in x and y. Motion per frame index f (1-based):
// translation velocity * (f - 1) + amplitude * sin(2 pi (f - 1) / period),
// rotation spin_degrees * (f - 1) about spin_axis through the center.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::plane;
  Vec3 center = Vec3::Zero();
  Vec2 half_extent = Vec2(1, 1);  // plane
  double radius = 0.5;            // sphere
  int instance = 0;
  int marbles = 1000;
  TextureKind texture = TextureKind::checker;
  Vec3 color_a = Vec3(0.9, 0.9, 0.9);
  Vec3 color_b = Vec3(0.1, 0.1, 0.1);
  double texture_scale = 4.0;
  Vec3 velocity = Vec3::Zero();
  Vec3 amplitude = Vec3::Zero();
  double period = 24.0;
  Vec3 spin_axis = Vec3(0, 1, 0);
  double spin_degrees = 0.0;
};

struct SceneSpec {
  int width = 320;
  int height = 240;
  int frames = 24;
  double focal = 300.0;
  std::vector<Primitive> primitives;
  std::vector<std::string> labels;
  Vec3 eye = Vec3(0, 0, 0);
  Vec3 eye_velocity = Vec3::Zero();  // per frame
  Vec3 target = Vec3(0, 0, 3);
  Vec3 pivot = Vec3(0, 0, 3);        // novel views orbit about this point
  std::vector<double> novel_degrees{10.0, -10.0};
  int novel_every = 4;               // frames with held-out views
  double marble_opacity = 0.97;
  double marble_scale = 0.7;         // times the lattice spacing
  int track_grid = 20;               // tracks per image side
  int track_seed_every = 12;
  int keypoint_grid = 10;
  int keypoint_stride = 8;           // source frames; queries stay within a block
  RenderConfig render;

  void validate() const;
};

// 24 frames at 320 x 240: a textured static backdrop and a translating,
// spinning sphere, about 4k ground-truth marbles. The backdrop lies inside
// every training view; pixels that see no surface carry label 0 ("void"),
// zero depth and black color.
SceneSpec default_scene_spec();

// Parses a JSON scene description; "default" yields default_scene_spec().
SceneSpec parse_scene_spec(const std::string &json_text);
SceneSpec load_scene_spec(const std::string &path_or_default);

// World pose of a primitive at frame f: x_world = R (x_body) + c where
// x_body is relative to the primitive's rest center.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};
RigidPose primitive_pose(const Primitive &p, int frame);

Sequence generate_synthetic(const SceneSpec &spec, std::uint64_t seed);

// Ground-truth cameras per frame.
Camera synthetic_camera(const SceneSpec &spec, int frame);

}  // namespace dgm
