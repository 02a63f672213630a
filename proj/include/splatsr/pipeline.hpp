#pragma once

#include "splatsr/model.hpp"
#include "splatsr/rasterizer.hpp"

#include <vector>

namespace splatsr {

// Per-visible-anchor forward intermediates.
struct AnchorForward {
  int anchor_index = 0;
  int gauss_base = 0;  // offset of this anchor's k Gaussians in the flat list
  Feat f_field = Feat::Zero();
  Feat f_supp = Feat::Zero();
  Feat eps = Feat::Zero();
  DecodeCache decode;
};

struct PipelineForward {
  std::vector<NeuralGaussian> gaussians;
  std::vector<AnchorForward> visible;
  RenderOutput render;
  int degenerate_view_dirs = 0;
};

// Dense gradient buffers matching the model's trainable parameters.
struct ModelGrads {
  std::vector<std::vector<double>> tables;  // per level, flat slot-major
  DecoderWeightGrads decoder;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> d_offsets;  // per anchor
  std::vector<Vec3> d_offset_scale;
  std::vector<Feat> d_f_mu;
  std::vector<Feat> d_f_sigma;

  void init_like(const Model& m);
  void add(const ModelGrads& o);
  void scale(double s);
};

// Expands visible anchors (camera-space z > z_near) into neural Gaussians
// with sampled supplementary features and renders them. `eps_per_anchor`
// indexes the full anchor list; pass nullptr for mean features (eps = 0).
PipelineForward pipeline_forward(const Model& model, const Camera& cam,
                                 const RenderConfig& cfg,
                                 const std::vector<Feat>* eps_per_anchor);

// Full reverse pass: image-space gradients propagate through compositing,
// projection, covariance/attribute decoding, feature sampling, and the hash
// field into `grads`. `d_extra_scale` (optional, per Gaussian) carries
// gradients that act directly on Gaussian scales (volume regularizer).
void pipeline_backward(const Model& model, const Camera& cam,
                       const RenderConfig& cfg, const PipelineForward& fwd,
                       const std::vector<double>& d_color_image,
                       const std::vector<double>& d_uncertainty_image,
                       const std::vector<Vec3>* d_extra_scale,
                       ModelGrads& grads);

}  // namespace splatsr
