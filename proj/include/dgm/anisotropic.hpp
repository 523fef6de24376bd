#pragma once

#include "dgm/camera.hpp"
#include "dgm/core.hpp"
#include "dgm/marbles.hpp"
#include "dgm/render.hpp"

#include <vector>

namespace dgm {

// Static Gaussian with full rotation and per-axis scale. Only used by the
// single-frame overfit comparison against isotropic marbles.
struct AnisoGaussian {
  Vec3 mu = Vec3::Zero();
  Vec4 quat = Vec4(1, 0, 0, 0);  // (w, x, y, z), normalized on use
  Vec3 log_scale = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;
  int instance = 0;
};

struct AnisoGrads {
  std::vector<Vec3> mu;
  std::vector<Vec4> quat;
  std::vector<Vec3> log_scale;
  std::vector<Vec3> color;
  std::vector<double> opacity_logit;

  explicit AnisoGrads(std::size_t n = 0)
      : mu(n, Vec3::Zero()), quat(n, Vec4::Zero()), log_scale(n, Vec3::Zero()),
        color(n, Vec3::Zero()), opacity_logit(n, 0.0) {}
};

// Identity rotation and equal axes, i.e. the same render as `set` at its
// first frame.
std::vector<AnisoGaussian> to_anisotropic(const MarbleSet &set);

Mat3 quat_to_rotation(const Vec4 &q);

// Splats with cov2d = J W R S^2 R^T W^T J^T plus the floor.
ProjectedSplats project_anisotropic(const std::vector<AnisoGaussian> &gaussians,
                                    const Camera &camera, const RenderConfig &config);

void project_anisotropic_backward(const std::vector<AnisoGaussian> &gaussians,
                                  const Camera &camera, const ProjectedSplats &splats,
                                  const SplatGrads &grads, AnisoGrads &out);

}  // namespace dgm
