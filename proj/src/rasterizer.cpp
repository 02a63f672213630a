#include "splatsr/rasterizer.hpp"

#include "splatsr/threading.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace splatsr {

Image RenderOutput::color_image() const {
  Image img(width, height, 3);
  img.data = color;
  return img;
}

Image RenderOutput::scalar_image(const std::vector<double>& plane) const {
  Image img(width, height, 1);
  img.data = plane;
  return img;
}

Mat3 covariance_from(const Vec4& q, const Vec3& s) {
  const Mat3 r = quat_to_rotation(q);
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

ProjectedGaussian project_gaussian(const NeuralGaussian& g, const Camera& cam,
                                   const RenderConfig& cfg) {
  ProjectedGaussian p;
  p.t_cam = cam.world_to_cam(g.mean);
  const double tz = p.t_cam.z();
  if (tz <= cfg.z_near) return p;  // culled, p.valid stays false

  const double tx = p.t_cam.x(), ty = p.t_cam.y();
  p.mean2d = Vec2(cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy);
  p.depth = tz;

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / tz, 0.0, -cam.fx * tx / (tz * tz),
         0.0, cam.fy / tz, -cam.fy * ty / (tz * tz);
  const Eigen::Matrix<double, 2, 3> t2 = jac * cam.R;
  const Mat3 sigma = covariance_from(g.rotation, g.scale);
  p.cov2d = t2 * sigma * t2.transpose() + 0.3 * Mat2::Identity();

  const double det = p.cov2d.determinant();
  if (!(det > 0.0) || !(p.cov2d(0, 0) > 0.0) || !(p.cov2d(1, 1) > 0.0)) {
    return p;  // non-PSD after regularization; caller counts these
  }
  p.cov_inv << p.cov2d(1, 1) / det, -p.cov2d(0, 1) / det,
               -p.cov2d(1, 0) / det, p.cov2d(0, 0) / det;
  const double mid = 0.5 * (p.cov2d(0, 0) + p.cov2d(1, 1));
  const double lmax = mid + std::sqrt(std::max(mid * mid - det, 0.0));
  // Footprint sized so every pixel outside it is below the alpha cutoff;
  // the tile bbox then drops exactly what compositing drops.
  const double sigma_cut = (cfg.alpha_min > 0.0 && cfg.alpha_min < 1.0)
                               ? std::sqrt(2.0 * std::log(1.0 / cfg.alpha_min))
                               : 3.0;
  p.radius = std::ceil(sigma_cut * std::sqrt(lmax));
  p.valid = true;
  return p;
}

RenderOutput rasterize(const std::vector<NeuralGaussian>& gaussians,
                       const Camera& cam, const RenderConfig& cfg) {
  const int w = cam.width, h = cam.height;
  const int n = static_cast<int>(gaussians.size());
  RenderOutput out;
  out.width = w;
  out.height = h;
  out.color.assign(static_cast<size_t>(w) * h * 3, 0.0);
  out.depth.assign(static_cast<size_t>(w) * h, 0.0);
  out.uncertainty.assign(static_cast<size_t>(w) * h, 0.0);
  out.final_t.assign(static_cast<size_t>(w) * h, 1.0);
  out.contribs.assign(static_cast<size_t>(w) * h, {});
  out.projected.resize(n);

  parallel_for(n, cfg.threads, [&](int i) {
    out.projected[i] = project_gaussian(gaussians[i], cam, cfg);
  });
  for (int i = 0; i < n; ++i) {
    const ProjectedGaussian& p = out.projected[i];
    if (!p.valid && p.t_cam.z() > cfg.z_near) ++out.culled_non_psd;
  }

  // Canonical front-to-back order: camera-space z, ties broken by index.
  std::vector<int> order;
  order.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (out.projected[i].valid) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = out.projected[a].depth, db = out.projected[b].depth;
    return da != db ? da < db : a < b;
  });

  const int ts = cfg.tile_size;
  const int ntx = (w + ts - 1) / ts;
  const int nty = (h + ts - 1) / ts;
  std::vector<std::vector<int>> tile_lists(static_cast<size_t>(ntx) * nty);
  for (int idx : order) {
    const ProjectedGaussian& p = out.projected[idx];
    const int x0 = std::max(0, static_cast<int>(std::floor(p.mean2d.x() - p.radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.mean2d.x() + p.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.mean2d.y() - p.radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.mean2d.y() + p.radius)));
    if (x0 > x1 || y0 > y1) continue;
    for (int tyy = y0 / ts; tyy <= y1 / ts; ++tyy) {
      for (int txx = x0 / ts; txx <= x1 / ts; ++txx) {
        tile_lists[static_cast<size_t>(tyy) * ntx + txx].push_back(idx);
      }
    }
  }

  const double log_empty = cfg.depth_log_space ? std::log(cfg.z_far) : cfg.z_far;
  parallel_for(ntx * nty, cfg.threads, [&](int tile) {
    const int tx = tile % ntx, ty = tile / ntx;
    const std::vector<int>& list = tile_lists[tile];
    const int px0 = tx * ts, px1 = std::min(w, px0 + ts);
    const int py0 = ty * ts, py1 = std::min(h, py0 + ts);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        const Vec2 pix(px + 0.5, py + 0.5);
        const size_t pidx = static_cast<size_t>(py) * w + px;
        double transmittance = 1.0;
        Vec3 color = Vec3::Zero();
        double unc = 0.0, depth_num = 0.0, depth_den = 0.0;
        std::vector<Contrib>& clist = out.contribs[pidx];
        for (int idx : list) {
          const ProjectedGaussian& p = out.projected[idx];
          const Vec2 d = pix - p.mean2d;
          const double power = -0.5 * d.dot(p.cov_inv * d);
          if (power > 0.0) continue;
          const double alpha =
              std::min(cfg.alpha_max, gaussians[idx].opacity * std::exp(power));
          if (alpha < cfg.alpha_min) continue;
          const double weight = transmittance * alpha;
          color += weight * gaussians[idx].color;
          unc += weight * gaussians[idx].uncertainty;
          const double sm = weight * std::exp(cfg.beta * weight);
          depth_num += sm * p.depth;
          depth_den += sm;
          clist.push_back({idx, alpha});
          transmittance *= 1.0 - alpha;
          if (transmittance < cfg.t_min) break;
        }
        color += transmittance * cfg.background;
        out.color[pidx * 3 + 0] = color[0];
        out.color[pidx * 3 + 1] = color[1];
        out.color[pidx * 3 + 2] = color[2];
        out.uncertainty[pidx] = unc;
        out.final_t[pidx] = transmittance;
        if (depth_den > 0.0) {
          const double metric = depth_num / depth_den;
          out.depth[pidx] = cfg.depth_log_space ? std::log(metric) : metric;
        } else {
          out.depth[pidx] = log_empty;
        }
      }
    }
  });
  return out;
}

void ScreenGrads::resize(size_t n) {
  d_color.assign(n, Vec3::Zero());
  d_opacity.assign(n, 0.0);
  d_uncertainty.assign(n, 0.0);
  d_mean2d.assign(n, Vec2::Zero());
  d_cov2d.assign(n, Mat2::Zero());
}

ScreenGrads rasterize_backward(const std::vector<NeuralGaussian>& gaussians,
                               const RenderOutput& out, const RenderConfig& cfg,
                               const std::vector<double>& d_color_image,
                               const std::vector<double>& d_uncertainty_image) {
  const int w = out.width, h = out.height;
  const size_t n = gaussians.size();
  const bool has_unc = !d_uncertainty_image.empty();
  if (d_color_image.size() != static_cast<size_t>(w) * h * 3) {
    throw DataError("rasterize_backward: color gradient size mismatch");
  }
  if (has_unc && d_uncertainty_image.size() != static_cast<size_t>(w) * h) {
    throw DataError("rasterize_backward: uncertainty gradient size mismatch");
  }

  // Per-band accumulators merged band-major keep the reduction deterministic
  // for a fixed thread count.
  const int bands = std::max(1, std::min(cfg.threads, h));
  struct BandAcc {
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity, d_uncertainty;
    std::vector<Vec2> d_mean2d;
    std::vector<Mat2> d_amat;  // gradient w.r.t. the inverse covariance
  };
  std::vector<BandAcc> accs(bands);
  for (auto& a : accs) {
    a.d_color.assign(n, Vec3::Zero());
    a.d_opacity.assign(n, 0.0);
    a.d_uncertainty.assign(n, 0.0);
    a.d_mean2d.assign(n, Vec2::Zero());
    a.d_amat.assign(n, Mat2::Zero());
  }

  const int rows_per_band = (h + bands - 1) / bands;
  parallel_for(bands, cfg.threads, [&](int band) {
    BandAcc& acc = accs[band];
    const int y0 = band * rows_per_band;
    const int y1 = std::min(h, y0 + rows_per_band);
    std::vector<double> t_seq;
    for (int py = y0; py < y1; ++py) {
      for (int px = 0; px < w; ++px) {
        const size_t pidx = static_cast<size_t>(py) * w + px;
        const std::vector<Contrib>& clist = out.contribs[pidx];
        if (clist.empty()) continue;
        const Vec3 d_pix_color(d_color_image[pidx * 3 + 0],
                               d_color_image[pidx * 3 + 1],
                               d_color_image[pidx * 3 + 2]);
        const double d_pix_unc = has_unc ? d_uncertainty_image[pidx] : 0.0;

        const size_t m = clist.size();
        t_seq.resize(m + 1);
        t_seq[0] = 1.0;
        for (size_t i = 0; i < m; ++i) {
          t_seq[i + 1] = t_seq[i] * (1.0 - clist[i].alpha);
        }
        const Vec2 pix(px + 0.5, py + 0.5);
        // suffix = sum_{j>i} w_j dL/dw_j plus the background term
        double suffix = t_seq[m] * d_pix_color.dot(cfg.background);
        for (size_t ii = m; ii-- > 0;) {
          const Contrib& c = clist[ii];
          const NeuralGaussian& g = gaussians[c.index];
          const ProjectedGaussian& p = out.projected[c.index];
          const double weight = t_seq[ii] * c.alpha;
          const double d_w = d_pix_color.dot(g.color) + d_pix_unc * g.uncertainty;

          acc.d_color[c.index] += weight * d_pix_color;
          acc.d_uncertainty[c.index] += weight * d_pix_unc;

          const double d_alpha = t_seq[ii] * d_w - suffix / (1.0 - c.alpha);
          suffix += weight * d_w;

          const Vec2 d = pix - p.mean2d;
          const double gauss = std::exp(-0.5 * d.dot(p.cov_inv * d));
          if (g.opacity * gauss >= cfg.alpha_max) continue;  // clamped branch
          acc.d_opacity[c.index] += d_alpha * gauss;
          const double d_power = d_alpha * c.alpha;
          const Vec2 ad = p.cov_inv * d;
          acc.d_mean2d[c.index] += d_power * ad;
          acc.d_amat[c.index] += -0.5 * d_power * (d * d.transpose());
        }
      }
    }
  });

  ScreenGrads grads;
  grads.resize(n);
  for (const BandAcc& acc : accs) {
    for (size_t i = 0; i < n; ++i) {
      grads.d_color[i] += acc.d_color[i];
      grads.d_opacity[i] += acc.d_opacity[i];
      grads.d_uncertainty[i] += acc.d_uncertainty[i];
      grads.d_mean2d[i] += acc.d_mean2d[i];
      grads.d_cov2d[i] += acc.d_amat[i];
    }
  }
  // A = cov2d^-1, so dL/dcov2d = -A dL/dA A.
  for (size_t i = 0; i < n; ++i) {
    if (!out.projected[i].valid) continue;
    const Mat2& a = out.projected[i].cov_inv;
    grads.d_cov2d[i] = -a * grads.d_cov2d[i] * a;
  }
  return grads;
}

void project_gaussian_backward(const ProjectedGaussian& proj, const Camera& cam,
                               const Mat3& sigma_world, const Vec2& d_mean2d,
                               const Mat2& d_cov2d, Vec3& d_mean, Mat3& d_sigma) {
  const double tx = proj.t_cam.x(), ty = proj.t_cam.y(), tz = proj.t_cam.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / tz, 0.0, -cam.fx * tx / (tz * tz),
         0.0, cam.fy / tz, -cam.fy * ty / (tz * tz);
  const Eigen::Matrix<double, 2, 3> t2 = jac * cam.R;

  const Mat2 g2 = 0.5 * (d_cov2d + d_cov2d.transpose());
  d_sigma = t2.transpose() * g2 * t2;

  const Eigen::Matrix<double, 2, 3> d_t2 = 2.0 * g2 * t2 * sigma_world;
  const Eigen::Matrix<double, 2, 3> d_jac = d_t2 * cam.R.transpose();

  Vec3 d_t = Vec3::Zero();
  const double inv_z2 = 1.0 / (tz * tz);
  const double inv_z3 = inv_z2 / tz;
  d_t.x() += d_jac(0, 2) * (-cam.fx * inv_z2);
  d_t.y() += d_jac(1, 2) * (-cam.fy * inv_z2);
  d_t.z() += d_jac(0, 0) * (-cam.fx * inv_z2) + d_jac(1, 1) * (-cam.fy * inv_z2) +
             d_jac(0, 2) * (2.0 * cam.fx * tx * inv_z3) +
             d_jac(1, 2) * (2.0 * cam.fy * ty * inv_z3);

  d_t.x() += d_mean2d.x() * cam.fx / tz;
  d_t.y() += d_mean2d.y() * cam.fy / tz;
  d_t.z() += -(d_mean2d.x() * cam.fx * tx + d_mean2d.y() * cam.fy * ty) * inv_z2;

  d_mean = cam.R.transpose() * d_t;
}

void covariance_backward(const Vec4& q, const Vec3& s, const Mat3& d_sigma,
                         Vec4& d_q, Vec3& d_s) {
  const Mat3 r = quat_to_rotation(q);
  const Mat3 m = r * s.asDiagonal();
  const Mat3 sym = d_sigma + d_sigma.transpose();
  const Mat3 d_m = sym * m;
  const Mat3 d_r = d_m * s.asDiagonal();
  for (int j = 0; j < 3; ++j) {
    d_s[j] = d_m.col(j).dot(r.col(j));
  }
  d_q = quat_rotation_backward(q, d_r);
}

Image render_error_map(const Image& render, const Image& pseudo) {
  if (!render.same_shape(pseudo)) {
    throw DataError("render_error_map: dimension mismatch");
  }
  Image err(render.width, render.height, 1);
  const int ch = render.channels;
  for (int y = 0; y < render.height; ++y) {
    for (int x = 0; x < render.width; ++x) {
      double sum = 0.0;
      for (int c = 0; c < ch; ++c) {
        sum += std::abs(render.at(x, y, c) - pseudo.at(x, y, c));
      }
      err.at(x, y, 0) = sum / ch;
    }
  }
  return err;
}

}  // namespace splatsr
