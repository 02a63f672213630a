#include "splatsr/trainer.hpp"

#include "splatsr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

namespace splatsr {

namespace {

struct PlainL1 {
  double loss = 0.0;
  Image d_render;
};

PlainL1 plain_l1(const Image& render, const Image& target) {
  if (!render.same_shape(target)) throw DataError("L1 loss: dimension mismatch");
  PlainL1 res;
  res.d_render = Image(render.width, render.height, render.channels);
  const double inv_n = 1.0 / static_cast<double>(render.size());
  for (size_t i = 0; i < render.size(); ++i) {
    const double diff = render.data[i] - target.data[i];
    res.loss += std::abs(diff);
    res.d_render.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv_n;
  }
  res.loss *= inv_n;
  return res;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

// Canonical scalar orders shared by the gradient flatteners and the
// parameter visitors; the optimizer state rows follow the same layout.

std::vector<double> flatten_tables(const ModelGrads& g) {
  std::vector<double> flat;
  size_t total = 0;
  for (const auto& level : g.tables) total += level.size();
  flat.reserve(total);
  for (const auto& level : g.tables) {
    flat.insert(flat.end(), level.begin(), level.end());
  }
  return flat;
}

void visit_tables(Model& m, const std::function<void(float&)>& fn) {
  for (auto& level : m.field.tables()) {
    for (float& v : level) fn(v);
  }
}

void flatten_head(const MlpHeadGrads& h, std::vector<double>& out) {
  for (int r = 0; r < h.w1.rows(); ++r) {
    for (int c = 0; c < h.w1.cols(); ++c) out.push_back(h.w1(r, c));
  }
  for (int i = 0; i < h.b1.size(); ++i) out.push_back(h.b1[i]);
  for (int r = 0; r < h.w2.rows(); ++r) {
    for (int c = 0; c < h.w2.cols(); ++c) out.push_back(h.w2(r, c));
  }
  for (int i = 0; i < h.b2.size(); ++i) out.push_back(h.b2[i]);
}

std::vector<double> flatten_decoder(const DecoderWeightGrads& g) {
  std::vector<double> flat;
  flatten_head(g.alpha, flat);
  flatten_head(g.color, flat);
  flatten_head(g.rotation, flat);
  flatten_head(g.scale, flat);
  return flat;
}

void visit_head(MlpHead& h, const std::function<void(float&)>& fn) {
  for (int r = 0; r < h.w1.rows(); ++r) {
    for (int c = 0; c < h.w1.cols(); ++c) fn(h.w1(r, c));
  }
  for (int i = 0; i < h.b1.size(); ++i) fn(h.b1[i]);
  for (int r = 0; r < h.w2.rows(); ++r) {
    for (int c = 0; c < h.w2.cols(); ++c) fn(h.w2(r, c));
  }
  for (int i = 0; i < h.b2.size(); ++i) fn(h.b2[i]);
}

void visit_decoder(Model& m, const std::function<void(float&)>& fn) {
  visit_head(m.decoders.alpha, fn);
  visit_head(m.decoders.color, fn);
  visit_head(m.decoders.rotation, fn);
  visit_head(m.decoders.scale, fn);
}

std::vector<double> flatten_offsets(const ModelGrads& g, int k) {
  std::vector<double> flat;
  flat.reserve(g.d_offsets.size() * k * 3);
  for (const auto& o : g.d_offsets) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < 3; ++j) flat.push_back(o(i, j));
    }
  }
  return flat;
}

void visit_offsets(Model& m, const std::function<void(float&)>& fn) {
  for (Anchor& a : m.anchors) {
    for (int i = 0; i < m.k; ++i) {
      for (int j = 0; j < 3; ++j) fn(a.offsets(i, j));
    }
  }
}

std::vector<double> flatten_offset_scale(const ModelGrads& g) {
  std::vector<double> flat;
  flat.reserve(g.d_offset_scale.size() * 3);
  for (const Vec3& v : g.d_offset_scale) {
    flat.push_back(v[0]);
    flat.push_back(v[1]);
    flat.push_back(v[2]);
  }
  return flat;
}

void visit_offset_scale(Model& m, const std::function<void(float&)>& fn) {
  for (Anchor& a : m.anchors) {
    for (int j = 0; j < 3; ++j) fn(a.offset_scale[j]);
  }
}

std::vector<double> flatten_feat(const std::vector<Feat>& feats) {
  std::vector<double> flat;
  flat.reserve(feats.size() * kFeatureDim);
  for (const Feat& f : feats) {
    for (int i = 0; i < kFeatureDim; ++i) flat.push_back(f[i]);
  }
  return flat;
}

void visit_f_mu(Model& m, const std::function<void(float&)>& fn) {
  for (Anchor& a : m.anchors) {
    for (int i = 0; i < kFeatureDim; ++i) fn(a.f_mu[i]);
  }
}

void visit_f_sigma(Model& m, const std::function<void(float&)>& fn) {
  for (Anchor& a : m.anchors) {
    for (int i = 0; i < kFeatureDim; ++i) fn(a.f_sigma[i]);
  }
}

size_t table_param_count(const Model& m) {
  size_t total = 0;
  for (const auto& level : m.field.tables()) total += level.size();
  return total;
}

size_t decoder_param_count(const Model& m) {
  return m.decoders.alpha.param_count() + m.decoders.color.param_count() +
         m.decoders.rotation.param_count() + m.decoders.scale.param_count();
}

Image image_from_plane(const std::vector<double>& plane, int w, int h) {
  Image img(w, h, 1);
  img.data = plane;
  return img;
}

}  // namespace

ViewLossResult coarse_view_loss(const Model& model, const SceneDataset& ds,
                                int view, const TrainConfig& cfg,
                                ModelGrads* grads) {
  ViewLossResult res;
  const Camera& cam = ds.cameras[view];
  res.fwd = pipeline_forward(model, cam, cfg.render, nullptr);
  const Image render = res.fwd.render.color_image();
  const Image& target = ds.lr_images[view];

  const PlainL1 l1 = plain_l1(render, target);
  Image d_ssim;
  const double s = grads ? ssim_with_grad(render, target, d_ssim)
                         : ssim(render, target);
  const VolumeRegResult vol = volume_reg(res.fwd.gaussians);

  res.parts.rec = l1.loss;
  res.parts.ssim_value = s;
  res.parts.vol = vol.loss;
  res.parts.fidelity = 0.0;
  res.total = total_loss(res.parts, cfg.loss_weights);

  if (grads) {
    std::vector<double> d_color(render.size());
    for (size_t i = 0; i < d_color.size(); ++i) {
      d_color[i] = l1.d_render.data[i] -
                   cfg.loss_weights.lambda_ssim * d_ssim.data[i];
    }
    std::vector<Vec3> d_scale(res.fwd.gaussians.size());
    for (size_t i = 0; i < d_scale.size(); ++i) {
      d_scale[i] = cfg.loss_weights.lambda_vol * vol.d_scale[i];
    }
    pipeline_backward(model, cam, cfg.render, res.fwd, d_color, {}, &d_scale,
                      *grads);
  }
  return res;
}

ViewLossResult fine_view_loss(const Model& model, const SceneDataset& ds,
                              int view, const TrainConfig& cfg,
                              const std::vector<Feat>& eps, ModelGrads* grads) {
  if (!ds.has_pseudo(view)) {
    throw DataError("fine stage requires HR pseudo-labels for view " +
                    std::to_string(view));
  }
  ViewLossResult res;
  const Camera hr_cam = ds.cameras[view].scaled(ds.upscale_factor);
  res.fwd = pipeline_forward(model, hr_cam, cfg.render, &eps);
  const Image render = res.fwd.render.color_image();
  const Image& pseudo = ds.hr_pseudo[view];
  const Image u_map =
      image_from_plane(res.fwd.render.uncertainty, render.width, render.height);

  Image d_render_rec;
  Image d_uncertainty;
  if (cfg.use_uncertainty_weighted_loss) {
    RecLossResult rec = rec_loss(render, pseudo, u_map,
                                 cfg.detach_uncertainty_weight);
    res.parts.rec = rec.loss;
    d_render_rec = std::move(rec.d_render);
    if (!cfg.detach_uncertainty_weight) d_uncertainty = std::move(rec.d_uncertainty);
  } else {
    PlainL1 l1 = plain_l1(render, pseudo);
    res.parts.rec = l1.loss;
    d_render_rec = std::move(l1.d_render);
  }

  Image d_ssim;
  const double s = grads ? ssim_with_grad(render, pseudo, d_ssim)
                         : ssim(render, pseudo);
  const VolumeRegResult vol = volume_reg(res.fwd.gaussians);
  LrFidelityResult fid;
  if (cfg.loss_weights.lambda_lpips > 0.0) {
    fid = lr_fidelity_loss(render, ds.lr_images[view], ds.upscale_factor);
  }

  res.parts.ssim_value = s;
  res.parts.vol = vol.loss;
  res.parts.fidelity = fid.loss;

  // Variance prior: lambda_u * mean over anchors of u^2.
  double u2_mean = 0.0;
  if (cfg.lambda_u > 0.0 && !model.anchors.empty()) {
    for (const Anchor& a : model.anchors) {
      const double u = anchor_uncertainty(a.f_sigma);
      u2_mean += u * u;
    }
    u2_mean /= static_cast<double>(model.anchors.size());
  }
  res.u_reg = cfg.lambda_u * u2_mean;
  res.total = total_loss(res.parts, cfg.loss_weights) + res.u_reg;

  if (grads) {
    std::vector<double> d_color(render.size());
    for (size_t i = 0; i < d_color.size(); ++i) {
      d_color[i] = d_render_rec.data[i] -
                   cfg.loss_weights.lambda_ssim * d_ssim.data[i];
      if (cfg.loss_weights.lambda_lpips > 0.0) {
        d_color[i] += cfg.loss_weights.lambda_lpips * fid.d_hr_render.data[i];
      }
    }
    std::vector<Vec3> d_scale(res.fwd.gaussians.size());
    for (size_t i = 0; i < d_scale.size(); ++i) {
      d_scale[i] = cfg.loss_weights.lambda_vol * vol.d_scale[i];
    }
    std::vector<double> d_unc;
    if (!d_uncertainty.empty()) d_unc = d_uncertainty.data;
    pipeline_backward(model, hr_cam, cfg.render, res.fwd, d_color, d_unc,
                      &d_scale, *grads);

    if (cfg.lambda_u > 0.0 && !model.anchors.empty()) {
      const double scale = cfg.lambda_u * 2.0 /
                           static_cast<double>(model.anchors.size());
      for (int ai = 0; ai < model.anchor_count(); ++ai) {
        const FeatF& fs = model.anchors[ai].f_sigma;
        for (int j = 0; j < kFeatureDim; ++j) {
          grads->d_f_sigma[ai][j] +=
              scale * std::exp(2.0 * static_cast<double>(fs[j]));
        }
      }
    }
  }
  return res;
}

Model build_initial_model(const std::vector<Vec3>& points, const TrainConfig& cfg) {
  Model model;
  model.k = cfg.k;
  model.sigma_init = cfg.sigma_init;
  Rng rng(cfg.seed);
  model.field = FeatureField(cfg.field);
  model.field.init_tables(rng);
  model.decoders.k = cfg.k;
  model.decoders.init(rng);
  model.anchors = init_anchors(points, cfg.init_voxel_size, cfg.k,
                               cfg.sigma_init, rng);
  return model;
}

RenderOutput render_view(const Model& model, const Camera& cam,
                         const RenderConfig& cfg) {
  PipelineForward fwd = pipeline_forward(model, cam, cfg, nullptr);
  return std::move(fwd.render);
}

double evaluate_psnr(const Model& model, const std::vector<Camera>& cams,
                     const std::vector<Image>& refs, const RenderConfig& cfg) {
  double sum = 0.0;
  for (size_t i = 0; i < cams.size(); ++i) {
    const RenderOutput out = render_view(model, cams[i], cfg);
    sum += psnr(out.color_image(), refs[i]);
  }
  return sum / static_cast<double>(cams.size());
}

namespace {

// Shared training machinery for both stages.
class TrainLoop {
 public:
  TrainLoop(Model model, const TrainConfig& cfg, bool fine_stage,
            TrainStats* stats)
      : model_(std::move(model)), cfg_(cfg), fine_(fine_stage), stats_(stats),
        rng_(cfg.seed + (fine_stage ? 1 : 0)) {
    const int64_t stage_iters = fine_ ? cfg_.fine_iters : cfg_.coarse_iters;
    opt_.add_group({"tables", cfg_.lr_tables, 0.0, 0, 1}, table_param_count(model_));
    opt_.add_group({"decoder", cfg_.lr_decoder, 0.0, 0, 1}, decoder_param_count(model_));
    opt_.add_group({"offsets", cfg_.lr_offsets, cfg_.lr_offsets_final, stage_iters,
                    static_cast<size_t>(model_.k) * 3},
                   model_.anchors.size() * model_.k * 3);
    opt_.add_group({"offset_scale", cfg_.lr_offset_scale, 0.0, 0, 3},
                   model_.anchors.size() * 3);
    opt_.add_group({"f_mu", cfg_.lr_f_mu, 0.0, 0, kFeatureDim},
                   model_.anchors.size() * kFeatureDim);
    opt_.add_group({"f_sigma", cfg_.lr_f_sigma, 0.0, 0, kFeatureDim},
                   model_.anchors.size() * kFeatureDim);
    reset_stats();
    if (!cfg_.log_path.empty()) {
      log_.open(cfg_.log_path, std::ios::trunc);
      log_ << "iter,loss,l_rec,ssim,l_vol,l_fid,anchors,psnr_eval\n";
    }
  }

  void load_optimizer(const OptimizerStateBlob& blob) { opt_.load_blob(blob); }

  Checkpoint run(const SceneDataset& ds) {
    const int64_t iters = fine_ ? cfg_.fine_iters : cfg_.coarse_iters;
    const int64_t densify_end =
        fine_ ? std::max<int64_t>(0, iters - cfg_.refine_phase_iters) : 0;
    snapshot(0);

    for (int64_t iter = 1; iter <= iters; ++iter) {
      const bool in_densify_phase = fine_ && iter <= densify_end;

      // The refinement phase opens with a single uncertainty-guided split.
      if (fine_ && cfg_.refine_enabled && iter == densify_end + 1) {
        refine_once();
        if (stats_) stats_->refine_iters.push_back(iter);
      }

      std::vector<Feat> eps;
      if (fine_) eps = draw_eps();

      const std::vector<int> views = pick_views(ds);
      ModelGrads grads;
      grads.init_like(model_);
      double loss_sum = 0.0;
      LossParts parts_sum;
      parts_sum.ssim_value = 0.0;
      for (int view : views) {
        ViewLossResult r =
            fine_ ? fine_view_loss(model_, ds, view, cfg_, eps, &grads)
                  : coarse_view_loss(model_, ds, view, cfg_, &grads);
        loss_sum += r.total;
        parts_sum.rec += r.parts.rec;
        parts_sum.ssim_value += r.parts.ssim_value;
        parts_sum.vol += r.parts.vol;
        parts_sum.fidelity += r.parts.fidelity;
        update_opacity_stats(r.fwd);
        if (in_densify_phase && cfg_.densify_enabled) {
          collect_window_candidates(ds, view, r.fwd);
        }
      }
      const double inv_v = 1.0 / static_cast<double>(views.size());
      const double loss = loss_sum * inv_v;
      if (!std::isfinite(loss)) {
        std::cerr << "[trainer] loss diverged at iteration " << iter
                  << "; restoring last good checkpoint\n";
        if (stats_) stats_->diverged = true;
        return make_checkpoint_from(snapshot_model_, snapshot_opt_,
                                    snapshot_iter_);
      }
      grads.scale(inv_v);
      apply_step(grads);

      if (in_densify_phase && cfg_.densify_enabled &&
          iter % cfg_.growth_interval == 0) {
        grow_from_window();
        if (stats_) stats_->growth_iters.push_back(iter);
      }
      if (cfg_.prune_enabled && iter % cfg_.prune_window == 0) {
        prune();
        snapshot(iter);
        if (stats_) stats_->prune_iters.push_back(iter);
      }
      if (stats_) stats_->anchor_counts.push_back(model_.anchor_count());
      if (cfg_.log_interval > 0 &&
          (iter % cfg_.log_interval == 0 || iter == iters)) {
        log_row(ds, iter, loss, parts_sum, inv_v);
      }
    }
    return make_checkpoint_from(model_, opt_.to_blob(), iters);
  }

  Model& model() { return model_; }

 private:
  std::vector<Feat> draw_eps() {
    std::vector<Feat> eps(model_.anchors.size());
    for (Feat& e : eps) {
      for (int i = 0; i < kFeatureDim; ++i) e[i] = rng_.normal();
    }
    return eps;
  }

  std::vector<int> pick_views(const SceneDataset& ds) {
    const int n = static_cast<int>(ds.cameras.size());
    const int want = std::min(cfg_.views_per_iter, n);
    std::vector<int> views;
    int guard = 0;
    while (static_cast<int>(views.size()) < want) {
      const int v = rng_.uniform_int(0, n - 1);
      if (std::find(views.begin(), views.end(), v) == views.end() ||
          ++guard > 64) {
        views.push_back(v);
      }
    }
    return views;
  }

  void apply_step(const ModelGrads& grads) {
    if (!model_.field.frozen()) {
      opt_.step_group("tables", flatten_tables(grads),
                      [&](const std::function<void(float&)>& fn) {
                        visit_tables(model_, fn);
                      });
    }
    opt_.step_group("decoder", flatten_decoder(grads.decoder),
                    [&](const std::function<void(float&)>& fn) {
                      visit_decoder(model_, fn);
                    });
    opt_.step_group("offsets", flatten_offsets(grads, model_.k),
                    [&](const std::function<void(float&)>& fn) {
                      visit_offsets(model_, fn);
                    });
    opt_.step_group("offset_scale", flatten_offset_scale(grads),
                    [&](const std::function<void(float&)>& fn) {
                      visit_offset_scale(model_, fn);
                    });
    opt_.step_group("f_mu", flatten_feat(grads.d_f_mu),
                    [&](const std::function<void(float&)>& fn) {
                      visit_f_mu(model_, fn);
                    });
    if (fine_) {
      opt_.step_group("f_sigma", flatten_feat(grads.d_f_sigma),
                      [&](const std::function<void(float&)>& fn) {
                        visit_f_sigma(model_, fn);
                      });
    }
    opt_.advance();
    // Projections keeping the model in its valid domain.
    for (Anchor& a : model_.anchors) {
      for (int j = 0; j < 3; ++j) {
        a.offset_scale[j] = std::max(a.offset_scale[j], 1e-6f);
      }
      for (int i = 0; i < kFeatureDim; ++i) {
        a.f_sigma[i] = std::clamp(a.f_sigma[i], -30.0f, 10.0f);
      }
    }
  }

  void reset_stats() {
    opacity_sum_.assign(model_.anchors.size(), 0.0);
    opacity_count_.assign(model_.anchors.size(), 0);
  }

  void update_opacity_stats(const PipelineForward& fwd) {
    for (const AnchorForward& af : fwd.visible) {
      double max_op = 0.0;
      for (int i = 0; i < model_.k; ++i) {
        max_op = std::max(max_op, fwd.gaussians[af.gauss_base + i].opacity);
      }
      opacity_sum_[af.anchor_index] += max_op;
      opacity_count_[af.anchor_index] += 1;
    }
  }

  void collect_window_candidates(const SceneDataset& ds, int view,
                                 const PipelineForward& fwd) {
    const Camera hr_cam = ds.cameras[view].scaled(ds.upscale_factor);
    const Image render = fwd.render.color_image();
    const Image errmap = render_error_map(render, ds.hr_pseudo[view]);

    Image hr_depth;
    if (ds.has_depth(view)) {
      hr_depth = ds.hr_depth[view];
    } else {
      // The spawned Gaussians are valid for the LR camera too (same center),
      // so the LR depth render can reuse them directly.
      RenderConfig depth_cfg = cfg_.render;
      depth_cfg.depth_log_space = false;
      const RenderOutput lr_out =
          rasterize(fwd.gaussians, ds.cameras[view], depth_cfg);
      const Image lr_depth = image_from_plane(lr_out.depth, ds.cameras[view].width,
                                              ds.cameras[view].height);
      hr_depth = upsample_depth_guided(lr_depth, ds.hr_pseudo[view],
                                       ds.upscale_factor, cfg_.depth_sigma_spatial,
                                       cfg_.depth_sigma_range);
    }
    DensifyConfig dcfg = cfg_.densify;
    window_candidates_[view] = collect_candidates(
        errmap, hr_depth, hr_cam, view, dcfg, 0.99 * cfg_.render.z_far);
  }

  void grow_from_window() {
    std::vector<CandidatePoint> all;
    for (const auto& [view, list] : window_candidates_) {
      all.insert(all.end(), list.begin(), list.end());
    }
    window_candidates_.clear();
    if (all.empty()) return;
    const std::vector<Anchor> grown =
        vote_and_grow(all, cfg_.densify, model_.anchors, model_.k,
                      cfg_.sigma_init, rng_);
    append_anchors(grown);
  }

  void refine_once() {
    std::vector<double> us;
    us.reserve(model_.anchors.size());
    for (const Anchor& a : model_.anchors) {
      us.push_back(anchor_uncertainty(a.f_sigma));
    }
    const double u_thr = percentile(us, cfg_.u_threshold_percentile);
    const std::vector<Anchor> children = refine_uncertain_anchors(
        model_.anchors, u_thr, cfg_.densify.base_voxel_size, cfg_.sigma_init,
        rng_);
    append_anchors(children);
  }

  void append_anchors(const std::vector<Anchor>& extra) {
    if (extra.empty()) return;
    model_.anchors.insert(model_.anchors.end(), extra.begin(), extra.end());
    opt_.append_rows("offsets", extra.size());
    opt_.append_rows("offset_scale", extra.size());
    opt_.append_rows("f_mu", extra.size());
    opt_.append_rows("f_sigma", extra.size());
    opacity_sum_.resize(model_.anchors.size(), 0.0);
    opacity_count_.resize(model_.anchors.size(), 0);
  }

  void prune() {
    std::vector<uint8_t> seen(model_.anchors.size(), 0);
    for (size_t i = 0; i < model_.anchors.size(); ++i) {
      if (opacity_count_[i] > 0) {
        seen[i] = 1;
        model_.anchors[i].opacity_accum =
            static_cast<float>(opacity_sum_[i] / opacity_count_[i]);
      }
    }
    std::vector<int> removed;
    const size_t n_removed =
        prune_anchors(model_.anchors, cfg_.prune_threshold, seen, &removed);
    if (n_removed > 0) {
      if (model_.anchors.empty()) {
        std::cerr << "[trainer] pruning removed every anchor\n";
      }
      opt_.remove_rows("offsets", removed);
      opt_.remove_rows("offset_scale", removed);
      opt_.remove_rows("f_mu", removed);
      opt_.remove_rows("f_sigma", removed);
    }
    reset_stats();
  }

  void snapshot(int64_t iter) {
    snapshot_model_ = model_;
    snapshot_opt_ = opt_.to_blob();
    snapshot_iter_ = iter;
  }

  Checkpoint make_checkpoint_from(const Model& m, const OptimizerStateBlob& blob,
                                  int64_t iter) const {
    Checkpoint ck;
    ck.model = m;
    ck.optimizer = blob;
    ck.stage = fine_ ? "fine" : "coarse";
    ck.iteration = iter;
    return ck;
  }

  void log_row(const SceneDataset& ds, int64_t iter, double loss,
               const LossParts& sum, double inv_v) {
    if (!log_.is_open()) return;
    const Camera cam = fine_ ? ds.cameras[0].scaled(ds.upscale_factor)
                             : ds.cameras[0];
    const Image& ref = fine_ ? ds.hr_pseudo[0] : ds.lr_images[0];
    const RenderOutput out = render_view(model_, cam, cfg_.render);
    const double p = psnr(out.color_image(), ref);
    log_ << iter << ',' << loss << ',' << sum.rec * inv_v << ','
         << sum.ssim_value * inv_v << ',' << sum.vol * inv_v << ','
         << sum.fidelity * inv_v << ',' << model_.anchors.size() << ',' << p
         << '\n';
    log_.flush();
  }

  Model model_;
  TrainConfig cfg_;
  bool fine_;
  TrainStats* stats_;
  Rng rng_;
  AdamOptimizer opt_;
  std::vector<double> opacity_sum_;
  std::vector<int> opacity_count_;
  std::map<int, std::vector<CandidatePoint>> window_candidates_;
  std::ofstream log_;
  Model snapshot_model_;
  OptimizerStateBlob snapshot_opt_;
  int64_t snapshot_iter_ = 0;
};

}  // namespace

Checkpoint train_coarse(const SceneDataset& ds, const std::vector<Vec3>& points,
                        const TrainConfig& cfg, TrainStats* stats) {
  ds.validate();
  Model model = build_initial_model(points, cfg);
  TrainLoop loop(std::move(model), cfg, /*fine=*/false, stats);
  return loop.run(ds);
}

Checkpoint train_fine(const Checkpoint& coarse, const SceneDataset& ds,
                      const TrainConfig& cfg, TrainStats* stats) {
  SceneDataset prepared = ds;
  prepared.upscale_factor = cfg.upscale_factor;
  for (size_t v = 0; v < prepared.cameras.size(); ++v) {
    if (!prepared.has_pseudo(static_cast<int>(v))) {
      if (!cfg.pseudo_fallback_bicubic) {
        throw DataError("missing HR pseudo-labels and bicubic fallback disabled");
      }
      if (prepared.hr_pseudo.size() <= v) prepared.hr_pseudo.resize(v + 1);
      prepared.hr_pseudo[v] =
          bicubic_upsample(prepared.lr_images[v], cfg.upscale_factor);
    }
  }
  prepared.validate();

  Model model = coarse.model;
  // The field is the frozen low-resolution foundation; supplementary
  // features turn variational with f_mu carried over from the coarse stage.
  model.field.set_frozen(true);
  for (Anchor& a : model.anchors) {
    a.f_sigma = FeatF::Constant(std::log(cfg.sigma_init));
  }
  // Stage 2 starts with fresh optimizer moments; the carried-over state is
  // the model itself.
  TrainLoop loop(std::move(model), cfg, /*fine=*/true, stats);
  return loop.run(prepared);
}

}  // namespace splatsr
