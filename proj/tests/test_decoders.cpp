#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testers.hpp"

#include "splatsr/decoders.hpp"

#include <cmath>

using namespace splatsr;

namespace {

DecoderSet random_decoders(int k, uint64_t seed) {
  DecoderSet d;
  d.k = k;
  Rng rng(seed);
  d.init(rng);
  return d;
}

struct Inputs {
  Feat f_field, f_supp;
  double delta;
  Vec3 dhat;
  Vec3 s;
};

Inputs random_inputs(uint64_t seed) {
  Rng rng(seed);
  Inputs in;
  for (int i = 0; i < kFeatureDim; ++i) {
    in.f_field[i] = rng.uniform(-1, 1);
    in.f_supp[i] = rng.uniform(-1, 1);
  }
  in.delta = rng.uniform(0.5, 4.0);
  double d[3];
  rng.unit_vector3(d);
  in.dhat = Vec3(d[0], d[1], d[2]);
  in.s = Vec3(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0));
  return in;
}

// Straight-line re-evaluation of one head with plain loops.
std::vector<double> head_oracle(const MlpHead& head, const double* input,
                                int in_dim) {
  const int hidden = static_cast<int>(head.b1.size());
  const int out_dim = static_cast<int>(head.b2.size());
  std::vector<double> raws(out_dim);
  std::vector<double> acts(hidden);
  for (int h = 0; h < hidden; ++h) {
    double pre = head.b1[h];
    for (int i = 0; i < in_dim; ++i) {
      pre += static_cast<double>(head.w1(h, i)) * input[i];
    }
    acts[h] = pre > 0 ? pre : 0.0;
  }
  for (int o = 0; o < out_dim; ++o) {
    double raw = head.b2[o];
    for (int h = 0; h < hidden; ++h) {
      raw += static_cast<double>(head.w2(o, h)) * acts[h];
    }
    raws[o] = raw;
  }
  return raws;
}

}  // namespace

TEST_CASE("zero network decodes to the sigmoid midpoint") {
  DecoderSet d;
  d.k = 4;
  Rng rng(1);
  d.init(rng);
  d.alpha.w1.setZero();
  d.alpha.w2.setZero();
  d.alpha.b1.setZero();
  d.alpha.b2.setZero();
  const Inputs in = random_inputs(2);
  const auto out = decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
  for (int i = 0; i < d.k; ++i) {
    CHECK(out.opacity[i] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("degenerate raw quaternion falls back to identity") {
  DecoderSet d;
  d.k = 1;
  Rng rng(3);
  d.init(rng);
  d.rotation.w1.setZero();
  d.rotation.w2.setZero();
  d.rotation.b1.setZero();
  d.rotation.b2.setZero();  // raw quaternion (0,0,0,0)
  const Inputs in = random_inputs(4);
  const auto out = decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
  CHECK(out.rotation[0][0] == 1.0);
  CHECK(out.rotation[0][1] == 0.0);
  CHECK(out.rotation[0][2] == 0.0);
  CHECK(out.rotation[0][3] == 0.0);
}

TEST_CASE("random decode matches independent matrix arithmetic") {
  const int k = 3;
  const DecoderSet d = random_decoders(k, 5);
  const Inputs in = random_inputs(6);
  const auto out = decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);

  double input[36];
  for (int i = 0; i < 16; ++i) input[i] = in.f_field[i];
  for (int i = 0; i < 16; ++i) input[16 + i] = in.f_supp[i];
  input[32] = in.delta;
  for (int i = 0; i < 3; ++i) input[33 + i] = in.dhat[i];

  const auto a_raw = head_oracle(d.alpha, input, 36);
  const auto c_raw = head_oracle(d.color, input, 36);
  const auto q_raw = head_oracle(d.rotation, input, 36);
  const auto s_raw = head_oracle(d.scale, input, 36);
  for (int i = 0; i < k; ++i) {
    CHECK(std::abs(out.opacity[i] - 1.0 / (1.0 + std::exp(-a_raw[i]))) < 1e-6);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(std::abs(out.color[i][ch] -
                     1.0 / (1.0 + std::exp(-c_raw[3 * i + ch]))) < 1e-6);
      const double sp = std::log1p(std::exp(s_raw[3 * i + ch]));
      CHECK(std::abs(out.scale[i][ch] - in.s[ch] * sp) < 1e-6);
    }
    double norm = 0.0;
    for (int j = 0; j < 4; ++j) norm += q_raw[4 * i + j] * q_raw[4 * i + j];
    norm = std::sqrt(norm);
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(out.rotation[i][j] - q_raw[4 * i + j] / norm) < 1e-6);
    }
  }
}

TEST_CASE("identical weights and inputs decode bit-identically") {
  const DecoderSet d = random_decoders(2, 7);
  const Inputs in = random_inputs(8);
  const auto a = decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
  const auto b = decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.opacity[i] == b.opacity[i]);
    CHECK((a.color[i] - b.color[i]).norm() == 0.0);
    CHECK((a.rotation[i] - b.rotation[i]).norm() == 0.0);
    CHECK((a.scale[i] - b.scale[i]).norm() == 0.0);
  }
}

TEST_CASE("squash ranges hold for random inputs") {
  const DecoderSet d = random_decoders(2, 9);
  Rng rng(10);
  for (int trial = 0; trial < 10000; ++trial) {
    Inputs in;
    for (int i = 0; i < kFeatureDim; ++i) {
      in.f_field[i] = rng.uniform(-5, 5);
      in.f_supp[i] = rng.uniform(-5, 5);
    }
    in.delta = rng.uniform(0.01, 10.0);
    double dv[3];
    rng.unit_vector3(dv);
    in.dhat = Vec3(dv[0], dv[1], dv[2]);
    in.s = Vec3(rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0),
                rng.uniform(0.01, 2.0));
    const auto out =
        decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
    for (int i = 0; i < d.k; ++i) {
      CHECK(out.opacity[i] >= 0.0);
      CHECK(out.opacity[i] <= 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(out.color[i][ch] >= 0.0);
        CHECK(out.color[i][ch] <= 1.0);
        CHECK(out.scale[i][ch] > 0.0);
      }
      CHECK(std::abs(out.rotation[i].norm() - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("non-finite input is rejected") {
  const DecoderSet d = random_decoders(2, 11);
  Inputs in = random_inputs(12);
  in.f_field[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(
      decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s),
      "non-finite decoder input", NumericError);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  const DecoderSet d = random_decoders(2, 13);
  const Inputs in = random_inputs(14);
  DecodeCache cache;
  decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s, &cache);
  AttributeUpstream up;
  up.d_opacity.assign(2, 0.0);
  up.d_color.assign(2, Vec3::Zero());
  up.d_rotation.assign(2, Vec4::Zero());
  up.d_scale.assign(2, Vec3::Zero());
  DecoderWeightGrads wg;
  wg.init_like(d);
  DecoderInputGrads ig;
  decoder_backward(d, cache, in.s, up, wg, ig);
  CHECK(wg.alpha.w1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(wg.scale.w2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ig.d_f_field.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ig.d_f_supp.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ig.d_offset_scale.cwiseAbs().maxCoeff() == 0.0);
}

namespace {

// Scalar objective mixing every decoded attribute, for finite differencing.
double decode_objective(const DecoderSet& d, const Inputs& in) {
  const auto out =
      decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s);
  double obj = 0.0;
  for (int i = 0; i < d.k; ++i) {
    obj += 1.3 * out.opacity[i];
    obj += out.color[i].dot(Vec3(0.2, -0.7, 0.4));
    obj += out.rotation[i].dot(Vec4(0.5, -0.2, 0.8, -0.4));
    obj += out.scale[i].dot(Vec3(-0.3, 0.9, 0.6));
  }
  return obj;
}

AttributeUpstream objective_upstream(int k) {
  AttributeUpstream up;
  up.d_opacity.assign(k, 1.3);
  up.d_color.assign(k, Vec3(0.2, -0.7, 0.4));
  up.d_rotation.assign(k, Vec4(0.5, -0.2, 0.8, -0.4));
  up.d_scale.assign(k, Vec3(-0.3, 0.9, 0.6));
  return up;
}

double fd_through(float& param, const DecoderSet& d, const Inputs& in) {
  const float saved = param;
  const double h = 1e-4;
  param = static_cast<float>(saved + h);
  const double hi = decode_objective(d, in);
  param = static_cast<float>(saved - h);
  const double lo = decode_objective(d, in);
  param = saved;
  return (hi - lo) / (static_cast<double>(static_cast<float>(saved + h)) -
                      static_cast<double>(static_cast<float>(saved - h)));
}

}  // namespace

TEST_CASE("backward matches central differences") {
  const int k = 2;
  DecoderSet d = random_decoders(k, 15);
  const Inputs in = random_inputs(16);

  DecodeCache cache;
  decode_attributes(d, in.f_field, in.f_supp, in.delta, in.dhat, in.s, &cache);
  DecoderWeightGrads wg;
  wg.init_like(d);
  DecoderInputGrads ig;
  decoder_backward(d, cache, in.s, objective_upstream(k), wg, ig);

  Rng pick(17);
  SUBCASE("weights and biases across all four heads") {
    struct Probe {
      MlpHead* head;
      Eigen::MatrixXd* gw1;
      Eigen::MatrixXd* gw2;
      Eigen::VectorXd* gb1;
      Eigen::VectorXd* gb2;
    };
    Probe probes[] = {{&d.alpha, &wg.alpha.w1, &wg.alpha.w2, &wg.alpha.b1, &wg.alpha.b2},
                      {&d.color, &wg.color.w1, &wg.color.w2, &wg.color.b1, &wg.color.b2},
                      {&d.rotation, &wg.rotation.w1, &wg.rotation.w2, &wg.rotation.b1,
                       &wg.rotation.b2},
                      {&d.scale, &wg.scale.w1, &wg.scale.w2, &wg.scale.b1, &wg.scale.b2}};
    for (Probe& p : probes) {
      for (int probe = 0; probe < 6; ++probe) {
        const int r1 = pick.uniform_int(0, static_cast<int>(p.head->w1.rows()) - 1);
        const int c1 = pick.uniform_int(0, static_cast<int>(p.head->w1.cols()) - 1);
        const double fd1 = fd_through(p.head->w1(r1, c1), d, in);
        CHECK(testers::rel_err((*p.gw1)(r1, c1), fd1) <= 1e-3);

        const int r2 = pick.uniform_int(0, static_cast<int>(p.head->w2.rows()) - 1);
        const int c2 = pick.uniform_int(0, static_cast<int>(p.head->w2.cols()) - 1);
        const double fd2 = fd_through(p.head->w2(r2, c2), d, in);
        CHECK(testers::rel_err((*p.gw2)(r2, c2), fd2) <= 1e-3);
      }
      const int b1i = pick.uniform_int(0, static_cast<int>(p.head->b1.size()) - 1);
      CHECK(testers::rel_err((*p.gb1)(b1i), fd_through(p.head->b1(b1i), d, in)) <= 1e-3);
      const int b2i = pick.uniform_int(0, static_cast<int>(p.head->b2.size()) - 1);
      CHECK(testers::rel_err((*p.gb2)(b2i), fd_through(p.head->b2(b2i), d, in)) <= 1e-3);
    }
  }

  SUBCASE("feature inputs") {
    for (int i = 0; i < kFeatureDim; ++i) {
      Inputs shifted = in;
      const double h = 1e-5;
      shifted.f_field[i] = in.f_field[i] + h;
      const double hi = decode_objective(d, shifted);
      shifted.f_field[i] = in.f_field[i] - h;
      const double lo = decode_objective(d, shifted);
      CHECK(testers::rel_err(ig.d_f_field[i], (hi - lo) / (2 * h)) <= 1e-3);

      shifted = in;
      shifted.f_supp[i] = in.f_supp[i] + h;
      const double shi = decode_objective(d, shifted);
      shifted.f_supp[i] = in.f_supp[i] - h;
      const double slo = decode_objective(d, shifted);
      CHECK(testers::rel_err(ig.d_f_supp[i], (shi - slo) / (2 * h)) <= 1e-3);
    }
  }

  SUBCASE("anchor offset scale through the scale head") {
    for (int ch = 0; ch < 3; ++ch) {
      Inputs shifted = in;
      const double h = 1e-5;
      shifted.s[ch] = in.s[ch] + h;
      const double hi = decode_objective(d, shifted);
      shifted.s[ch] = in.s[ch] - h;
      const double lo = decode_objective(d, shifted);
      CHECK(testers::rel_err(ig.d_offset_scale[ch], (hi - lo) / (2 * h)) <= 1e-3);
    }
  }
}

TEST_CASE("decoder weights serialize and reload bit-exactly") {
  const DecoderSet d = random_decoders(5, 19);
  const auto blob = d.serialize();
  const DecoderSet loaded = DecoderSet::deserialize(blob.data(), blob.size());
  CHECK(loaded.k == d.k);
  CHECK(loaded.hidden == d.hidden);
  CHECK(loaded.alpha.w1 == d.alpha.w1);
  CHECK(loaded.color.w2 == d.color.w2);
  CHECK(loaded.rotation.b1 == d.rotation.b1);
  CHECK(loaded.scale.b2 == d.scale.b2);
  CHECK(loaded.serialize() == blob);
}
