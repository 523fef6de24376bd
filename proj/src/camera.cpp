#include "dgm/camera.hpp"

#include <Eigen/Geometry>

namespace dgm {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error("camera: image size must be positive");
  const Mat3 rrt = rotation * rotation.transpose();
  if (!rrt.isApprox(Mat3::Identity(), 1e-6) || rotation.determinant() < 0.0)
    throw Error("camera: rotation is not orthonormal with determinant +1");
  if (!translation.allFinite()) throw Error("camera: translation is not finite");
}

Camera make_camera(int width, int height, double focal) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  return cam;
}

void look_at(Camera &cam, const Vec3 &eye, const Vec3 &target, const Vec3 &up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = (-up).cross(z);
  if (x.norm() < 1e-12) throw Error("look_at: up vector parallel to view direction");
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 cam_to_world;
  cam_to_world.col(0) = x;
  cam_to_world.col(1) = y;
  cam_to_world.col(2) = z;
  cam.rotation = cam_to_world.transpose();
  cam.translation = -cam.rotation * eye;
}

Camera orbit(const Camera &cam, const Vec3 &pivot, double degrees, const Vec3 &up) {
  const double rad = degrees * M_PI / 180.0;
  const Eigen::AngleAxisd rot(rad, up.normalized());
  const Vec3 eye = pivot + rot * (cam.center() - pivot);
  Camera out = cam;
  look_at(out, eye, pivot, up);
  return out;
}

}  // namespace dgm
