#pragma once

#include "splatsr/common.hpp"
#include "splatsr/image.hpp"
#include "splatsr/scene_model.hpp"

#include <vector>

namespace splatsr {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_vol = 0.01;
  double lambda_lpips = 0.5;
};

// Reparameterized draw: f_mu + eps (.) exp(f_sigma).
Feat sample_supp_feature(const FeatF& f_mu, const FeatF& f_sigma, const Feat& eps);

struct RecLossResult {
  double loss = 0.0;
  Image weight_map;            // (1 - sigmoid(U)) per pixel, diagnostics
  Image d_render;              // same shape as render
  Image d_uncertainty;         // H x W x 1; zero when detached
};

// Uncertainty-weighted L1: mean over pixels/channels of
// (1 - sigmoid(U)) * |render - pseudo|. With detach_uncertainty_weight the
// weight acts as a constant and no gradient flows into U.
RecLossResult rec_loss(const Image& render, const Image& pseudo,
                       const Image& u_map, bool detach_uncertainty_weight = true);

// Mean SSIM, 11x11 Gaussian window sigma=1.5, C1=0.01^2, C2=0.03^2,
// channels averaged, valid-window positions only. Throws if either
// dimension is below the window size.
double ssim(const Image& a, const Image& b);
// Also produces dSSIM/da.
double ssim_with_grad(const Image& a, const Image& b, Image& d_a);

struct VolumeRegResult {
  double loss = 0.0;
  std::vector<Vec3> d_scale;  // per Gaussian
};

// Sum over Gaussians of the product of the three scale components.
VolumeRegResult volume_reg(const std::vector<NeuralGaussian>& gaussians);

struct LrFidelityResult {
  double loss = 0.0;
  Image d_hr_render;
};

// Box-downsample the HR render by `factor`, then apply the perceptual proxy
// against the LR ground truth: L1 + 0.5 * (1 - SSIM).
LrFidelityResult lr_fidelity_loss(const Image& hr_render, const Image& lr_gt,
                                  int factor);

struct LossParts {
  double rec = 0.0;
  double ssim_value = 1.0;
  double vol = 0.0;
  double fidelity = 0.0;
};

// rec + lambda_ssim * (1 - ssim) + lambda_vol * vol + lambda_lpips * fidelity.
double total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace splatsr
