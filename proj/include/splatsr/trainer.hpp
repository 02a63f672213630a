#pragma once

#include "splatsr/densifier.hpp"
#include "splatsr/losses.hpp"
#include "splatsr/model.hpp"
#include "splatsr/optimizer.hpp"
#include "splatsr/pipeline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace splatsr {

struct TrainConfig {
  int64_t coarse_iters = 3000;
  int64_t fine_iters = 1500;
  int growth_interval = 100;
  int refine_phase_iters = 1000;
  int prune_window = 100;
  double prune_threshold = 0.005;
  int views_per_iter = 1;
  uint64_t seed = 42;
  int upscale_factor = 4;
  double u_threshold_percentile = 90.0;

  int k = 5;
  float sigma_init = 1e-4f;
  double init_voxel_size = 0.1;

  LossWeights loss_weights;
  double lambda_u = 1e-4;             // variance prior, keeps Eq-15 weights honest
  bool detach_uncertainty_weight = true;
  bool use_uncertainty_weighted_loss = true;
  bool densify_enabled = true;
  bool refine_enabled = true;
  bool prune_enabled = true;
  bool pseudo_fallback_bicubic = true;

  double lr_offsets = 0.01;
  double lr_offsets_final = 1e-4;     // exponential decay target over the stage
  double lr_offset_scale = 0.007;
  double lr_f_mu = 0.0075;
  double lr_f_sigma = 0.002;
  double lr_tables = 0.01;
  double lr_decoder = 0.002;

  RenderConfig render;
  DensifyConfig densify;
  FeatureFieldConfig field;
  double depth_sigma_spatial = 1.0;
  double depth_sigma_range = 0.1;

  int log_interval = 50;
  std::string log_path;  // empty disables the CSV log
};

struct ViewLossResult {
  double total = 0.0;
  LossParts parts;
  double u_reg = 0.0;
  PipelineForward fwd;
};

// Coarse objective for one view: plain L1 against the LR ground truth plus
// SSIM and volume terms. With `grads` null this is a pure evaluation.
ViewLossResult coarse_view_loss(const Model& model, const SceneDataset& ds,
                                int view, const TrainConfig& cfg,
                                ModelGrads* grads);

// Fine objective for one view at HR: uncertainty-weighted reconstruction
// against the pseudo-label, SSIM, volume, LR-fidelity, and the variance
// prior. `eps` holds one noise draw per anchor.
ViewLossResult fine_view_loss(const Model& model, const SceneDataset& ds,
                              int view, const TrainConfig& cfg,
                              const std::vector<Feat>& eps, ModelGrads* grads);

// Builds a fresh model (field + decoders + anchors from `points`).
Model build_initial_model(const std::vector<Vec3>& points, const TrainConfig& cfg);

// Maintenance-event record for cadence checks and diagnostics.
struct TrainStats {
  std::vector<int64_t> growth_iters;
  std::vector<int64_t> refine_iters;
  std::vector<int64_t> prune_iters;
  std::vector<int> anchor_counts;  // one entry per iteration, post-maintenance
  bool diverged = false;
};

// Stage 1: optimizes hash tables, supplementary features (deterministic),
// offsets, scales, and decoder weights against the LR ground truth.
Checkpoint train_coarse(const SceneDataset& ds, const std::vector<Vec3>& points,
                        const TrainConfig& cfg, TrainStats* stats = nullptr);

// Stage 2: freezes the field, switches the supplementary feature to its
// variational form, and optimizes against HR pseudo-labels with voting
// densification, uncertainty refinement, and pruning.
Checkpoint train_fine(const Checkpoint& coarse, const SceneDataset& ds,
                      const TrainConfig& cfg, TrainStats* stats = nullptr);

// Deterministic evaluation render (mean features, eps = 0).
RenderOutput render_view(const Model& model, const Camera& cam,
                         const RenderConfig& cfg);

// Mean PSNR of eps=0 renders against per-view references.
double evaluate_psnr(const Model& model, const std::vector<Camera>& cams,
                     const std::vector<Image>& refs, const RenderConfig& cfg);

}  // namespace splatsr
