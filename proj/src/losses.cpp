#include "splatsr/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace splatsr {

Feat sample_supp_feature(const FeatF& f_mu, const FeatF& f_sigma, const Feat& eps) {
  Feat out;
  for (int i = 0; i < kFeatureDim; ++i) {
    out[i] = static_cast<double>(f_mu[i]) +
             eps[i] * std::exp(static_cast<double>(f_sigma[i]));
  }
  return out;
}

RecLossResult rec_loss(const Image& render, const Image& pseudo,
                       const Image& u_map, bool detach_uncertainty_weight) {
  if (!render.same_shape(pseudo)) throw DataError("rec_loss: dimension mismatch");
  if (u_map.width != render.width || u_map.height != render.height ||
      u_map.channels != 1) {
    throw DataError("rec_loss: uncertainty map dimension mismatch");
  }
  RecLossResult res;
  res.weight_map = Image(render.width, render.height, 1);
  res.d_render = Image(render.width, render.height, render.channels);
  res.d_uncertainty = Image(render.width, render.height, 1);
  const double inv_n = 1.0 / static_cast<double>(render.size());
  double loss = 0.0;
  for (int y = 0; y < render.height; ++y) {
    for (int x = 0; x < render.width; ++x) {
      const double u = u_map.at(x, y, 0);
      const double s = sigmoid(u);
      const double weight = 1.0 - s;
      res.weight_map.at(x, y, 0) = weight;
      double abs_sum = 0.0;
      for (int c = 0; c < render.channels; ++c) {
        const double diff = render.at(x, y, c) - pseudo.at(x, y, c);
        abs_sum += std::abs(diff);
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        res.d_render.at(x, y, c) = weight * sgn * inv_n;
      }
      loss += weight * abs_sum;
      if (!detach_uncertainty_weight) {
        res.d_uncertainty.at(x, y, 0) = -s * (1.0 - s) * abs_sum * inv_n;
      }
    }
  }
  res.loss = loss * inv_n;
  return res;
}

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable correlation of one channel plane.
struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  Plane() = default;
  Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0) {}
  double& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane conv_valid(const Plane& in, const std::array<double, kWin>& g) {
  Plane mid(in.w - kWin + 1, in.h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < mid.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += g[i] * in.at(x + i, y);
      mid.at(x, y) = acc;
    }
  }
  Plane out(mid.w, in.h - kWin + 1);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWin; ++i) acc += g[i] * mid.at(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

// Adjoint of conv_valid: scatters each window value over its support.
Plane conv_valid_adjoint(const Plane& in, int full_w, int full_h,
                         const std::array<double, kWin>& g) {
  Plane mid(in.w, full_h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      const double v = in.at(x, y);
      for (int i = 0; i < kWin; ++i) mid.at(x, y + i) += g[i] * v;
    }
  }
  Plane out(full_w, full_h);
  for (int y = 0; y < full_h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      const double v = mid.at(x, y);
      for (int i = 0; i < kWin; ++i) out.at(x + i, y) += g[i] * v;
    }
  }
  return out;
}

Plane channel_plane(const Image& img, int c) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) p.at(x, y) = img.at(x, y, c);
  }
  return p;
}

double ssim_impl(const Image& a, const Image& b, Image* d_a) {
  if (!a.same_shape(b)) throw DataError("ssim: dimension mismatch");
  if (a.width < kWin || a.height < kWin) {
    throw DataError("ssim: image smaller than the 11x11 window");
  }
  const auto g = gaussian_window();
  const int vw = a.width - kWin + 1, vh = a.height - kWin + 1;
  const double inv_count =
      1.0 / (static_cast<double>(vw) * vh * a.channels);
  double total = 0.0;
  if (d_a) *d_a = Image(a.width, a.height, a.channels);

  for (int c = 0; c < a.channels; ++c) {
    const Plane pa = channel_plane(a, c);
    const Plane pb = channel_plane(b, c);
    Plane pa2(a.width, a.height), pb2(a.width, a.height), pab(a.width, a.height);
    for (size_t i = 0; i < pa.v.size(); ++i) {
      pa2.v[i] = pa.v[i] * pa.v[i];
      pb2.v[i] = pb.v[i] * pb.v[i];
      pab.v[i] = pa.v[i] * pb.v[i];
    }
    const Plane mu_a = conv_valid(pa, g);
    const Plane mu_b = conv_valid(pb, g);
    const Plane m_a2 = conv_valid(pa2, g);
    const Plane m_b2 = conv_valid(pb2, g);
    const Plane m_ab = conv_valid(pab, g);

    Plane p1(vw, vh), p2(vw, vh), p3(vw, vh);  // ds/dmu_a, ds/dvar_a, ds/dcov
    for (int y = 0; y < vh; ++y) {
      for (int x = 0; x < vw; ++x) {
        const double ma = mu_a.at(x, y), mb = mu_b.at(x, y);
        const double va = m_a2.at(x, y) - ma * ma;
        const double vb = m_b2.at(x, y) - mb * mb;
        const double cov = m_ab.at(x, y) - ma * mb;
        const double n1 = 2.0 * ma * mb + kC1;
        const double n2 = 2.0 * cov + kC2;
        const double d1 = ma * ma + mb * mb + kC1;
        const double d2 = va + vb + kC2;
        const double s = (n1 * n2) / (d1 * d2);
        total += s;
        if (d_a) {
          p1.at(x, y) = (2.0 * mb * n2) / (d1 * d2) - (2.0 * ma * s) / d1;
          p2.at(x, y) = -s / d2;
          p3.at(x, y) = (2.0 * n1) / (d1 * d2);
        }
      }
    }
    if (d_a) {
      // d/da_p = G*(P1) + 2 a_p G*(P2) - 2 G*(mu_a P2) + b_p G*(P3) - G*(mu_b P3)
      Plane mu_a_p2(vw, vh), mu_b_p3(vw, vh);
      for (size_t i = 0; i < p2.v.size(); ++i) {
        mu_a_p2.v[i] = mu_a.v[i] * p2.v[i];
        mu_b_p3.v[i] = mu_b.v[i] * p3.v[i];
      }
      const Plane t1 = conv_valid_adjoint(p1, a.width, a.height, g);
      const Plane t2 = conv_valid_adjoint(p2, a.width, a.height, g);
      const Plane t2m = conv_valid_adjoint(mu_a_p2, a.width, a.height, g);
      const Plane t3 = conv_valid_adjoint(p3, a.width, a.height, g);
      const Plane t3m = conv_valid_adjoint(mu_b_p3, a.width, a.height, g);
      for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
          const double av = pa.at(x, y), bv = pb.at(x, y);
          d_a->at(x, y, c) =
              inv_count * (t1.at(x, y) + 2.0 * av * t2.at(x, y) -
                           2.0 * t2m.at(x, y) + bv * t3.at(x, y) - t3m.at(x, y));
        }
      }
    }
  }
  return total * inv_count;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Image& d_a) {
  return ssim_impl(a, b, &d_a);
}

VolumeRegResult volume_reg(const std::vector<NeuralGaussian>& gaussians) {
  VolumeRegResult res;
  res.d_scale.resize(gaussians.size(), Vec3::Zero());
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const Vec3& s = gaussians[i].scale;
    res.loss += s[0] * s[1] * s[2];
    res.d_scale[i] = Vec3(s[1] * s[2], s[0] * s[2], s[0] * s[1]);
  }
  return res;
}

LrFidelityResult lr_fidelity_loss(const Image& hr_render, const Image& lr_gt,
                                  int factor) {
  if (hr_render.width != lr_gt.width * factor ||
      hr_render.height != lr_gt.height * factor ||
      hr_render.channels != lr_gt.channels) {
    throw DataError("lr_fidelity_loss: dimension mismatch with factor");
  }
  const Image down = box_downsample(hr_render, factor);
  Image d_down(down.width, down.height, down.channels);
  const double inv_n = 1.0 / static_cast<double>(down.size());
  double l1 = 0.0;
  for (size_t i = 0; i < down.size(); ++i) {
    const double diff = down.data[i] - lr_gt.data[i];
    l1 += std::abs(diff);
    d_down.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv_n;
  }
  l1 *= inv_n;

  Image d_down_ssim;
  const double s = ssim_with_grad(down, lr_gt, d_down_ssim);
  for (size_t i = 0; i < d_down.size(); ++i) {
    d_down.data[i] += -0.5 * d_down_ssim.data[i];
  }

  LrFidelityResult res;
  res.loss = l1 + 0.5 * (1.0 - s);
  // Adjoint of the box filter spreads each LR gradient evenly.
  res.d_hr_render = Image(hr_render.width, hr_render.height, hr_render.channels);
  const double inv_f2 = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < hr_render.height; ++y) {
    for (int x = 0; x < hr_render.width; ++x) {
      for (int c = 0; c < hr_render.channels; ++c) {
        res.d_hr_render.at(x, y, c) =
            d_down.at(x / factor, y / factor, c) * inv_f2;
      }
    }
  }
  return res;
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  return parts.rec + weights.lambda_ssim * (1.0 - parts.ssim_value) +
         weights.lambda_vol * parts.vol + weights.lambda_lpips * parts.fidelity;
}

}  // namespace splatsr
