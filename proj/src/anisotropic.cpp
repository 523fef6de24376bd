#include "dgm/anisotropic.hpp"

namespace dgm {

std::vector<AnisoGaussian> to_anisotropic(const MarbleSet &set) {
  std::vector<AnisoGaussian> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Marble &m = set.marbles[i];
    out[i].mu = m.mu + m.delta_x[0];
    out[i].log_scale = Vec3::Constant(m.log_scale);
    out[i].color = m.color;
    out[i].opacity_logit = m.opacity_logit;
    out[i].instance = m.instance;
  }
  return out;
}

Mat3 quat_to_rotation(const Vec4 &qr) {
  const Vec4 q = qr.normalized();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

namespace {

Mat3 world_covariance(const AnisoGaussian &g) {
  const Mat3 r = quat_to_rotation(g.quat);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

// d(scalar)/d(q) given dL/dR for the rotation of the normalized quaternion.
Vec4 rotation_backward(const Vec4 &qr, const Mat3 &dr) {
  const double norm = qr.norm();
  const Vec4 q = qr / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 rw, rx, ry, rz;
  rw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  rx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  ry << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  rz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  const Vec4 dq((dr.array() * rw.array()).sum(), (dr.array() * rx.array()).sum(),
                (dr.array() * ry.array()).sum(), (dr.array() * rz.array()).sum());
  return (dq - q * q.dot(dq)) / norm;
}

}  // namespace

ProjectedSplats project_anisotropic(const std::vector<AnisoGaussian> &gaussians,
                                    const Camera &camera, const RenderConfig &config) {
  ProjectedSplats out;
  out.splats.resize(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const AnisoGaussian &g = gaussians[i];
    Splat &s = out.splats[i];
    s.cam = camera.to_camera(g.mu);
    s.depth = s.cam.z();
    s.color = g.color;
    s.opacity = logistic(g.opacity_logit);
    s.instance = g.instance;
    if (!(s.depth > config.near_plane)) {
      s.visible = false;
      continue;
    }
    s.mean2d = camera.project(s.cam);
    const auto j = detail::projection_jacobian(camera, s.cam);
    const Mat3 sc = camera.rotation * world_covariance(g) * camera.rotation.transpose();
    const Mat2 cov = j * sc * j.transpose();
    s.cov2d = Vec3(cov(0, 0) + config.cov_floor, 0.5 * (cov(0, 1) + cov(1, 0)),
                   cov(1, 1) + config.cov_floor);
    detail::cull(s, camera, config);
  }
  return out;
}

void project_anisotropic_backward(const std::vector<AnisoGaussian> &gaussians,
                                  const Camera &camera, const ProjectedSplats &splats,
                                  const SplatGrads &grads, AnisoGrads &out) {
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Splat &s = splats.splats[i];
    if (!s.visible) continue;
    const AnisoGaussian &g = gaussians[i];
    Vec3 d_cam = detail::mean_depth_backward(camera, s.cam, grads.mean2d[i], grads.depth[i]);
    const Vec3 &gc = grads.cov2d[i];
    if (!gc.isZero(0.0)) {
      Mat2 G;
      G << gc.x(), 0.5 * gc.y(), 0.5 * gc.y(), gc.z();
      const auto J = detail::projection_jacobian(camera, s.cam);
      const Mat3 &W = camera.rotation;
      const Mat3 r = quat_to_rotation(g.quat);
      const Vec3 sv = g.log_scale.array().exp();
      const Mat3 m = r * sv.asDiagonal();
      const Mat3 sc = W * m * m.transpose() * W.transpose();
      const Eigen::Matrix<double, 2, 3> dJ = 2.0 * G * J * sc;
      d_cam += detail::jacobian_backward(camera, s.cam, dJ);
      const Mat3 d_sc = J.transpose() * G * J;
      const Mat3 d_sigma = W.transpose() * d_sc * W;
      const Mat3 dm = 2.0 * d_sigma * m;
      const Mat3 rt_dm = r.transpose() * dm;
      for (int a = 0; a < 3; ++a) out.log_scale[i][a] += rt_dm(a, a) * sv[a];
      out.quat[i] += rotation_backward(g.quat, dm * sv.asDiagonal());
    }
    out.mu[i] += camera.rotation.transpose() * d_cam;
    out.color[i] += grads.color[i];
    out.opacity_logit[i] += grads.opacity[i] * s.opacity * (1.0 - s.opacity);
  }
}

}  // namespace dgm
