#pragma once

#include "dgm/core.hpp"

namespace dgm {

// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (x, y)
// has its center at (x + 0.5, y + 0.5) in image coordinates.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // world -> camera
  int width = 1, height = 1;

  Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
  Vec3 to_world(const Vec3 &cam) const {
    return rotation.transpose() * (cam - translation);
  }
  Vec3 center() const { return -rotation.transpose() * translation; }

  // Camera-space point at depth z seen through pixel coordinate (u, v).
  Vec3 unproject(double u, double v, double z) const {
    return {(u - cx) / fx * z, (v - cy) / fy * z, z};
  }
  Vec2 project(const Vec3 &cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }
  double diagonal() const { return std::hypot(double(width), double(height)); }

  // Throws unless intrinsics are positive and the rotation is proper.
  void validate() const;

  bool operator==(const Camera &o) const {
    return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy &&
           rotation == o.rotation && translation == o.translation &&
           width == o.width && height == o.height;
  }
};

// Principal point at the image center.
Camera make_camera(int width, int height, double focal);

// World-to-camera extrinsics for a camera at `eye` looking at `target`,
// with `up` mapped to image-up (negative y).
void look_at(Camera &cam, const Vec3 &eye, const Vec3 &target,
             const Vec3 &up = Vec3(0, -1, 0));

// Rotates the camera center about a vertical axis through `pivot` by
// `degrees`, keeping the camera aimed at the pivot.
Camera orbit(const Camera &cam, const Vec3 &pivot, double degrees,
             const Vec3 &up = Vec3(0, -1, 0));

}  // namespace dgm
