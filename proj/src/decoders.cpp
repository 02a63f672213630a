#include "splatsr/decoders.hpp"

#include <cmath>
#include <cstring>

namespace splatsr {

void MlpHead::init(int in, int hidden, int out, Rng& rng) {
  w1.resize(hidden, in);
  b1 = Eigen::VectorXf::Zero(hidden);
  w2.resize(out, hidden);
  b2 = Eigen::VectorXf::Zero(out);
  const double lim1 = std::sqrt(6.0 / (in + hidden));
  const double lim2 = std::sqrt(6.0 / (hidden + out));
  for (int r = 0; r < hidden; ++r) {
    for (int c = 0; c < in; ++c) {
      w1(r, c) = static_cast<float>(rng.uniform(-lim1, lim1));
    }
  }
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < hidden; ++c) {
      w2(r, c) = static_cast<float>(rng.uniform(-lim2, lim2));
    }
  }
}

Eigen::VectorXd MlpHead::forward(const Eigen::VectorXd& x, Eigen::VectorXd& h_pre,
                                 Eigen::VectorXd& h) const {
  h_pre = w1.cast<double>() * x + b1.cast<double>();
  h = h_pre.cwiseMax(0.0);
  return w2.cast<double>() * h + b2.cast<double>();
}

size_t MlpHead::param_count() const {
  return static_cast<size_t>(w1.size()) + b1.size() + w2.size() + b2.size();
}

void MlpHeadGrads::init_like(const MlpHead& head) {
  w1 = Eigen::MatrixXd::Zero(head.w1.rows(), head.w1.cols());
  b1 = Eigen::VectorXd::Zero(head.b1.size());
  w2 = Eigen::MatrixXd::Zero(head.w2.rows(), head.w2.cols());
  b2 = Eigen::VectorXd::Zero(head.b2.size());
}

void MlpHeadGrads::add(const MlpHeadGrads& o) {
  w1 += o.w1;
  b1 += o.b1;
  w2 += o.w2;
  b2 += o.b2;
}

void MlpHeadGrads::clear() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

void DecoderSet::init(Rng& rng) {
  alpha.init(kInputDim, hidden, k, rng);
  color.init(kInputDim, hidden, 3 * k, rng);
  rotation.init(kInputDim, hidden, 4 * k, rng);
  scale.init(kInputDim, hidden, 3 * k, rng);
}

void DecoderWeightGrads::init_like(const DecoderSet& d) {
  alpha.init_like(d.alpha);
  color.init_like(d.color);
  rotation.init_like(d.rotation);
  scale.init_like(d.scale);
}

void DecoderWeightGrads::add(const DecoderWeightGrads& o) {
  alpha.add(o.alpha);
  color.add(o.color);
  rotation.add(o.rotation);
  scale.add(o.scale);
}

void DecoderWeightGrads::clear() {
  alpha.clear();
  color.clear();
  rotation.clear();
  scale.clear();
}

namespace {
constexpr double kQuatNormEps = 1e-12;
}

DecodedAttributes decode_attributes(const DecoderSet& dec, const Feat& f_field,
                                    const Feat& f_supp, double delta_vc,
                                    const Vec3& d_vc, const Vec3& offset_scale,
                                    DecodeCache* cache) {
  Eigen::VectorXd x(DecoderSet::kInputDim);
  x.segment<kFeatureDim>(0) = f_field;
  x.segment<kFeatureDim>(kFeatureDim) = f_supp;
  x[2 * kFeatureDim] = delta_vc;
  x.segment<3>(2 * kFeatureDim + 1) = d_vc;
  if (!x.allFinite()) throw NumericError("non-finite decoder input");

  DecodeCache local;
  DecodeCache& c = cache ? *cache : local;
  c.input = x;
  c.alpha_raw = dec.alpha.forward(x, c.alpha_hpre, c.alpha_h);
  c.color_raw = dec.color.forward(x, c.color_hpre, c.color_h);
  c.rot_raw = dec.rotation.forward(x, c.rot_hpre, c.rot_h);
  c.scale_raw = dec.scale.forward(x, c.scale_hpre, c.scale_h);

  const int k = dec.k;
  DecodedAttributes out;
  out.opacity.resize(k);
  out.color.resize(k);
  out.rotation.resize(k);
  out.scale.resize(k);
  for (int i = 0; i < k; ++i) {
    out.opacity[i] = sigmoid(c.alpha_raw[i]);
    for (int ch = 0; ch < 3; ++ch) {
      out.color[i][ch] = sigmoid(c.color_raw[3 * i + ch]);
    }
    const Vec4 rq = c.rot_raw.segment<4>(4 * i);
    const double n = rq.norm();
    // Degenerate raw quaternion falls back to identity rotation.
    out.rotation[i] = n < kQuatNormEps ? Vec4(1, 0, 0, 0) : Vec4(rq / n);
    for (int ch = 0; ch < 3; ++ch) {
      out.scale[i][ch] = offset_scale[ch] * softplus(c.scale_raw[3 * i + ch]);
    }
  }
  return out;
}

namespace {

// d_raw -> weight grads and input grad for one head.
void head_backward(const MlpHead& head, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& h_pre, const Eigen::VectorXd& h,
                   const Eigen::VectorXd& d_raw, MlpHeadGrads& g,
                   Eigen::VectorXd& d_x) {
  g.w2 += d_raw * h.transpose();
  g.b2 += d_raw;
  Eigen::VectorXd d_h = head.w2.cast<double>().transpose() * d_raw;
  for (int i = 0; i < d_h.size(); ++i) {
    if (h_pre[i] <= 0.0) d_h[i] = 0.0;
  }
  g.w1 += d_h * x.transpose();
  g.b1 += d_h;
  d_x += head.w1.cast<double>().transpose() * d_h;
}

}  // namespace

void decoder_backward(const DecoderSet& dec, const DecodeCache& cache,
                      const Vec3& offset_scale, const AttributeUpstream& up,
                      DecoderWeightGrads& wgrads, DecoderInputGrads& igrads) {
  const int k = dec.k;
  Eigen::VectorXd d_alpha_raw(k), d_color_raw(3 * k), d_rot_raw(4 * k),
      d_scale_raw(3 * k);

  for (int i = 0; i < k; ++i) {
    const double s = sigmoid(cache.alpha_raw[i]);
    d_alpha_raw[i] = up.d_opacity[i] * s * (1.0 - s);
    for (int ch = 0; ch < 3; ++ch) {
      const double sc = sigmoid(cache.color_raw[3 * i + ch]);
      d_color_raw[3 * i + ch] = up.d_color[i][ch] * sc * (1.0 - sc);
    }
    const Vec4 rq = cache.rot_raw.segment<4>(4 * i);
    const double n = rq.norm();
    if (n < kQuatNormEps) {
      d_rot_raw.segment<4>(4 * i).setZero();
    } else {
      const Vec4 q = rq / n;
      const Vec4 du = up.d_rotation[i];
      d_rot_raw.segment<4>(4 * i) = (du - q * q.dot(du)) / n;
    }
    for (int ch = 0; ch < 3; ++ch) {
      const double raw = cache.scale_raw[3 * i + ch];
      d_scale_raw[3 * i + ch] = up.d_scale[i][ch] * offset_scale[ch] * sigmoid(raw);
      igrads.d_offset_scale[ch] += up.d_scale[i][ch] * softplus(raw);
    }
  }

  Eigen::VectorXd d_x = Eigen::VectorXd::Zero(DecoderSet::kInputDim);
  head_backward(dec.alpha, cache.input, cache.alpha_hpre, cache.alpha_h,
                d_alpha_raw, wgrads.alpha, d_x);
  head_backward(dec.color, cache.input, cache.color_hpre, cache.color_h,
                d_color_raw, wgrads.color, d_x);
  head_backward(dec.rotation, cache.input, cache.rot_hpre, cache.rot_h,
                d_rot_raw, wgrads.rotation, d_x);
  head_backward(dec.scale, cache.input, cache.scale_hpre, cache.scale_h,
                d_scale_raw, wgrads.scale, d_x);

  igrads.d_f_field += d_x.segment<kFeatureDim>(0);
  igrads.d_f_supp += d_x.segment<kFeatureDim>(kFeatureDim);
}

namespace {
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}
uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
float get_f32(const uint8_t* p) {
  const uint32_t u = get_u32(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
void put_head(std::vector<uint8_t>& out, const MlpHead& h) {
  put_u32(out, static_cast<uint32_t>(h.w1.cols()));
  put_u32(out, static_cast<uint32_t>(h.w1.rows()));
  put_u32(out, static_cast<uint32_t>(h.w2.rows()));
  for (int r = 0; r < h.w1.rows(); ++r) {
    for (int c = 0; c < h.w1.cols(); ++c) put_f32(out, h.w1(r, c));
  }
  for (int i = 0; i < h.b1.size(); ++i) put_f32(out, h.b1[i]);
  for (int r = 0; r < h.w2.rows(); ++r) {
    for (int c = 0; c < h.w2.cols(); ++c) put_f32(out, h.w2(r, c));
  }
  for (int i = 0; i < h.b2.size(); ++i) put_f32(out, h.b2[i]);
}
MlpHead get_head(const uint8_t* bytes, size_t n, size_t& pos) {
  auto need = [&](size_t bytes_needed) {
    if (n - pos < bytes_needed) throw DataError("truncated SGSW blob");
  };
  need(12);
  const uint32_t in = get_u32(bytes + pos);
  const uint32_t hidden = get_u32(bytes + pos + 4);
  const uint32_t out_dim = get_u32(bytes + pos + 8);
  pos += 12;
  MlpHead h;
  h.w1.resize(hidden, in);
  h.b1.resize(hidden);
  h.w2.resize(out_dim, hidden);
  h.b2.resize(out_dim);
  need((static_cast<size_t>(hidden) * in + hidden +
        static_cast<size_t>(out_dim) * hidden + out_dim) * 4);
  for (uint32_t r = 0; r < hidden; ++r) {
    for (uint32_t c = 0; c < in; ++c) {
      h.w1(r, c) = get_f32(bytes + pos);
      pos += 4;
    }
  }
  for (uint32_t i = 0; i < hidden; ++i) {
    h.b1[i] = get_f32(bytes + pos);
    pos += 4;
  }
  for (uint32_t r = 0; r < out_dim; ++r) {
    for (uint32_t c = 0; c < hidden; ++c) {
      h.w2(r, c) = get_f32(bytes + pos);
      pos += 4;
    }
  }
  for (uint32_t i = 0; i < out_dim; ++i) {
    h.b2[i] = get_f32(bytes + pos);
    pos += 4;
  }
  return h;
}
}  // namespace

std::vector<uint8_t> DecoderSet::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'G', 'S', 'W'});
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(k));
  put_u32(out, static_cast<uint32_t>(hidden));
  put_head(out, alpha);
  put_head(out, color);
  put_head(out, rotation);
  put_head(out, scale);
  return out;
}

DecoderSet DecoderSet::deserialize(const uint8_t* bytes, size_t n) {
  if (n < 16 || std::memcmp(bytes, "SGSW", 4) != 0) {
    throw DataError("not an SGSW decoder blob");
  }
  if (get_u32(bytes + 4) != 1) throw DataError("unsupported SGSW version");
  DecoderSet d;
  d.k = static_cast<int>(get_u32(bytes + 8));
  d.hidden = static_cast<int>(get_u32(bytes + 12));
  size_t pos = 16;
  d.alpha = get_head(bytes, n, pos);
  d.color = get_head(bytes, n, pos);
  d.rotation = get_head(bytes, n, pos);
  d.scale = get_head(bytes, n, pos);
  return d;
}

}  // namespace splatsr
