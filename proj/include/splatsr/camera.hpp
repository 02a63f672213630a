#pragma once

#include "splatsr/common.hpp"

#include <string>
#include <vector>

namespace splatsr {

// Pinhole camera with world-to-camera extrinsics: x_cam = R * x_world + t.
struct Camera {
  int id = 0;
  int width = 0;
  int height = 0;
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 world_to_cam(const Vec3& x) const { return R * x + t; }
  Vec3 center() const { return -R.transpose() * t; }

  Mat3 intrinsics() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  // Perspective projection to pixel coordinates plus camera-space depth.
  // Caller must ensure z > 0.
  void project(const Vec3& x_world, Vec2& pixel, double& depth) const {
    const Vec3 p = world_to_cam(x_world);
    pixel[0] = fx * p.x() / p.z() + cx;
    pixel[1] = fy * p.y() / p.z() + cy;
    depth = p.z();
  }

  // Inverse of project: lifts (u, v) at metric depth d back to world space.
  Vec3 backproject(double u, double v, double d) const {
    const Vec3 p_cam((u - cx) * d / fx, (v - cy) * d / fy, d);
    return R.transpose() * (p_cam - t);
  }

  // Same camera with intrinsics and image size scaled by an integer factor.
  Camera scaled(int factor) const {
    Camera c = *this;
    c.width *= factor;
    c.height *= factor;
    c.fx *= factor;
    c.fy *= factor;
    c.cx *= factor;
    c.cy *= factor;
    return c;
  }

  // Checks orthonormality of R and the intrinsics ranges; throws DataError.
  void validate() const;
};

// JSON array of {id,width,height,fx,fy,cx,cy,R,t}; R is a row-major
// 9-element array, t a 3-element array.
std::vector<Camera> load_cameras_json(const std::string& path);
void save_cameras_json(const std::vector<Camera>& cams, const std::string& path);

}  // namespace splatsr
