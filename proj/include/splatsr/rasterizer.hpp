#pragma once

#include "splatsr/camera.hpp"
#include "splatsr/common.hpp"
#include "splatsr/image.hpp"
#include "splatsr/scene_model.hpp"

#include <vector>

namespace splatsr {

struct RenderConfig {
  int tile_size = 16;
  double beta = 3.0;            // softmax depth temperature
  double alpha_min = 1.0 / 255.0;
  double t_min = 1e-4;          // early-stop transmittance
  double alpha_max = 0.99;
  Vec3 background = Vec3::Zero();
  double z_near = 0.01;
  double z_far = 100.0;
  bool depth_log_space = true;  // false exposes the pre-log metric value
  int threads = 1;
};

// Screen-space footprint of one Gaussian.
struct ProjectedGaussian {
  bool valid = false;
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  Mat2 cov_inv = Mat2::Zero();
  double depth = 0.0;       // camera-space z
  double radius = 0.0;      // 3-sigma extent in pixels
  Vec3 t_cam = Vec3::Zero();
};

// One per-pixel contributor record, in front-to-back order.
struct Contrib {
  int32_t index;   // into the input Gaussian list
  double alpha;    // effective alpha at this pixel (post clamp)
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<double> color;        // H*W*3
  std::vector<double> depth;        // H*W (Eq-style softmax-scaled log depth by default)
  std::vector<double> uncertainty;  // H*W
  std::vector<double> final_t;      // H*W
  std::vector<std::vector<Contrib>> contribs;  // H*W, backward auxiliaries
  std::vector<ProjectedGaussian> projected;    // per input Gaussian
  int culled_non_psd = 0;

  Image color_image() const;
  Image scalar_image(const std::vector<double>& plane) const;
};

// Local-affine projection of a 3D Gaussian to a 2D screen splat. Returns an
// invalid result when camera-space z <= z_near (culled, not an error).
// cov2d gains a +0.3 I dilation for a minimum one-pixel-ish footprint.
ProjectedGaussian project_gaussian(const NeuralGaussian& g, const Camera& cam,
                                   const RenderConfig& cfg);

// Tile-based front-to-back compositing of color, softmax-scaled depth,
// uncertainty, and final transmittance. Deterministic: depth sort with index
// tie-breaking, fixed tile traversal.
RenderOutput rasterize(const std::vector<NeuralGaussian>& gaussians,
                       const Camera& cam, const RenderConfig& cfg);

// Gradients w.r.t. each Gaussian's color, opacity, uncertainty and its
// screen-space mean/covariance.
struct ScreenGrads {
  std::vector<Vec3> d_color;
  std::vector<double> d_opacity;   // w.r.t. the Gaussian's opacity attribute
  std::vector<double> d_uncertainty;
  std::vector<Vec2> d_mean2d;
  std::vector<Mat2> d_cov2d;

  void resize(size_t n);
};

// d_color_image: H*W*3 (required); d_uncertainty_image: H*W or empty.
ScreenGrads rasterize_backward(const std::vector<NeuralGaussian>& gaussians,
                               const RenderOutput& out, const RenderConfig& cfg,
                               const std::vector<double>& d_color_image,
                               const std::vector<double>& d_uncertainty_image);

// Chains screen-space gradients back through the projection to the world
// mean and 3x3 covariance.
void project_gaussian_backward(const ProjectedGaussian& proj, const Camera& cam,
                               const Mat3& sigma_world, const Vec2& d_mean2d,
                               const Mat2& d_cov2d, Vec3& d_mean, Mat3& d_sigma);

// Sigma = R(q) diag(s)^2 R(q)^T; maps dL/dSigma to the unit quaternion and
// the scale vector.
void covariance_backward(const Vec4& q, const Vec3& s, const Mat3& d_sigma,
                         Vec4& d_q, Vec3& d_s);
Mat3 covariance_from(const Vec4& q, const Vec3& s);

// Per-pixel mean absolute color error; inputs must have identical dims.
Image render_error_map(const Image& render, const Image& pseudo);

}  // namespace splatsr
