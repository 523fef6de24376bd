#pragma once

#include "dgm/camera.hpp"
#include "dgm/marbles.hpp"
#include "dgm/render.hpp"
#include "dgm/rng.hpp"
#include "dgm/synthetic.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace dgm::test {

inline double uniform(Rng &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 uniform3(Rng &rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Marbles in front of a camera at the origin looking down +z.
inline MarbleSet random_set(Rng &rng, int n, int length = 1, int first = 1, int instances = 2,
                            double motion = 0.05) {
  MarbleSet s;
  s.first_frame = first;
  s.last_frame = first + length - 1;
  s.marbles.resize(n);
  for (Marble &m : s.marbles) {
    m.mu = Vec3(uniform(rng, -0.8, 0.8), uniform(rng, -0.6, 0.6), uniform(rng, 2.0, 4.0));
    m.log_scale = std::log(uniform(rng, 0.03, 0.15));
    m.color = uniform3(rng, 0.05, 0.95);
    m.opacity_logit = logit(uniform(rng, 0.2, 0.9));
    m.instance = static_cast<int>(uniform_int(rng, 0, instances - 1));
    m.delta_x.assign(length, Vec3::Zero());
    for (int k = 1; k < length; ++k) m.delta_x[k] = m.delta_x[k - 1] + uniform3(rng, -motion, motion);
  }
  return s;
}

inline Camera test_camera(int w, int h, double focal = 0.0) {
  Camera c = make_camera(w, h, focal > 0.0 ? focal : 0.9 * w);
  return c;
}

// Smooth compositing: no hard cutoff or early stop inside the tested range.
inline RenderConfig smooth_config(int labels = 2) {
  RenderConfig rc;
  rc.cutoff_sigma = 9.0;
  rc.min_transmittance = 1e-14;
  rc.num_labels = labels;
  return rc;
}

// Small synthetic scene shared by the trainer and CLI tests.
inline SceneSpec small_scene(int frames, int width = 64, int height = 48) {
  SceneSpec s = default_scene_spec();
  s.width = width;
  s.height = height;
  s.focal = 300.0 * width / 320.0;
  s.frames = frames;
  s.primitives[0].marbles = 300;
  s.primitives[1].marbles = 150;
  s.track_grid = 6;
  s.track_seed_every = 4;
  s.keypoint_grid = 4;
  s.keypoint_stride = 4;
  s.novel_every = 4;
  return s;
}

inline std::filesystem::path temp_dir(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("dgm_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace dgm::test
