#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace splatsr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

using Vec3f = Eigen::Vector3f;

// Anchor features are 16-dimensional throughout: the field contributes
// levels * features_per_level = 16, and the supplementary feature matches.
inline constexpr int kFeatureDim = 16;

using Feat = Eigen::Matrix<double, kFeatureDim, 1>;
using FeatF = Eigen::Matrix<float, kFeatureDim, 1>;

// Malformed or inconsistent input data (files, dimensions, empty sets).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure (non-finite values, divergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  // log(1 + e^x), stable for large |x|
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

// Chain rule through quat_to_rotation: maps dL/dR to dL/dq for unit q.
inline Vec4 quat_rotation_backward(const Vec4& q, const Mat3& dr) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2.0 * (x * (dr(2, 1) - dr(1, 2)) + y * (dr(0, 2) - dr(2, 0)) +
                 z * (dr(1, 0) - dr(0, 1)));
  dq[1] = 2.0 * (w * (dr(2, 1) - dr(1, 2)) + y * (dr(1, 0) + dr(0, 1)) +
                 z * (dr(0, 2) + dr(2, 0)) - 2.0 * x * (dr(1, 1) + dr(2, 2)));
  dq[2] = 2.0 * (w * (dr(0, 2) - dr(2, 0)) + x * (dr(1, 0) + dr(0, 1)) +
                 z * (dr(2, 1) + dr(1, 2)) - 2.0 * y * (dr(0, 0) + dr(2, 2)));
  dq[3] = 2.0 * (w * (dr(1, 0) - dr(0, 1)) + x * (dr(0, 2) + dr(2, 0)) +
                 y * (dr(2, 1) + dr(1, 2)) - 2.0 * z * (dr(0, 0) + dr(1, 1)));
  return dq;
}

}  // namespace splatsr
