#pragma once

#include "splatsr/common.hpp"
#include "splatsr/rng.hpp"

#include <vector>

namespace splatsr {

// One 2-layer perceptron with rectified-linear hidden units. Weights are f32
// (checkpoint precision); arithmetic runs in double.
struct MlpHead {
  Eigen::MatrixXf w1;  // hidden x in
  Eigen::VectorXf b1;
  Eigen::MatrixXf w2;  // out x hidden
  Eigen::VectorXf b2;

  void init(int in, int hidden, int out, Rng& rng);
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Eigen::VectorXd& h_pre,
                          Eigen::VectorXd& h) const;
  size_t param_count() const;
};

struct MlpHeadGrads {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  void init_like(const MlpHead& head);
  void add(const MlpHeadGrads& o);
  void clear();
};

// Per-anchor attribute decoders. Input is (f_field, f_supp, delta_vc, d_vc):
// 16 + 16 + 1 + 3 = 36 values; each head emits all k Gaussians at once.
struct DecoderSet {
  static constexpr int kInputDim = 2 * kFeatureDim + 4;

  int k = 5;
  int hidden = 32;
  MlpHead alpha;     // out k,   squash sigmoid
  MlpHead color;     // out 3k,  squash sigmoid
  MlpHead rotation;  // out 4k,  normalized to unit quaternions
  MlpHead scale;     // out 3k,  s = S (.) softplus(raw)

  void init(Rng& rng);

  std::vector<uint8_t> serialize() const;
  static DecoderSet deserialize(const uint8_t* bytes, size_t n);
};

struct DecodedAttributes {
  std::vector<double> opacity;   // k
  std::vector<Vec3> color;       // k
  std::vector<Vec4> rotation;    // k, unit quaternions
  std::vector<Vec3> scale;       // k, componentwise > 0
};

// Forward intermediates kept for the analytic backward pass.
struct DecodeCache {
  Eigen::VectorXd input;  // 36
  Eigen::VectorXd alpha_hpre, alpha_h, alpha_raw;
  Eigen::VectorXd color_hpre, color_h, color_raw;
  Eigen::VectorXd rot_hpre, rot_h, rot_raw;
  Eigen::VectorXd scale_hpre, scale_h, scale_raw;
};

// Shared weight gradients, accumulated over every decoded anchor.
struct DecoderWeightGrads {
  MlpHeadGrads alpha, color, rotation, scale;

  void init_like(const DecoderSet& d);
  void add(const DecoderWeightGrads& o);
  void clear();
};

// Per-call gradients w.r.t. the decoder inputs.
struct DecoderInputGrads {
  Feat d_f_field = Feat::Zero();
  Feat d_f_supp = Feat::Zero();
  Vec3 d_offset_scale = Vec3::Zero();  // through the scale head only
};

struct AttributeUpstream {
  std::vector<double> d_opacity;   // k
  std::vector<Vec3> d_color;       // k
  std::vector<Vec4> d_rotation;    // k, w.r.t. the unit quaternion
  std::vector<Vec3> d_scale;       // k
};

DecodedAttributes decode_attributes(const DecoderSet& dec, const Feat& f_field,
                                    const Feat& f_supp, double delta_vc,
                                    const Vec3& d_vc, const Vec3& offset_scale,
                                    DecodeCache* cache = nullptr);

// Analytic gradients for all weights, both feature inputs, and the anchor
// offset scale (scale-head path). Weight grads accumulate into `wgrads`.
void decoder_backward(const DecoderSet& dec, const DecodeCache& cache,
                      const Vec3& offset_scale, const AttributeUpstream& up,
                      DecoderWeightGrads& wgrads, DecoderInputGrads& igrads);

}  // namespace splatsr
