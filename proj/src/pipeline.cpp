#include "splatsr/pipeline.hpp"

#include "splatsr/losses.hpp"
#include "splatsr/threading.hpp"

#include <cmath>

namespace splatsr {

void ModelGrads::init_like(const Model& m) {
  tables.resize(m.field.levels());
  for (int l = 0; l < m.field.levels(); ++l) {
    tables[l].assign(m.field.tables()[l].size(), 0.0);
  }
  decoder.init_like(m.decoders);
  const int n = m.anchor_count();
  d_offsets.assign(n, Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(m.k, 3));
  d_offset_scale.assign(n, Vec3::Zero());
  d_f_mu.assign(n, Feat::Zero());
  d_f_sigma.assign(n, Feat::Zero());
}

void ModelGrads::add(const ModelGrads& o) {
  for (size_t l = 0; l < tables.size(); ++l) {
    for (size_t i = 0; i < tables[l].size(); ++i) tables[l][i] += o.tables[l][i];
  }
  decoder.add(o.decoder);
  for (size_t i = 0; i < d_offsets.size(); ++i) {
    d_offsets[i] += o.d_offsets[i];
    d_offset_scale[i] += o.d_offset_scale[i];
    d_f_mu[i] += o.d_f_mu[i];
    d_f_sigma[i] += o.d_f_sigma[i];
  }
}

void ModelGrads::scale(double s) {
  for (auto& level : tables) {
    for (double& v : level) v *= s;
  }
  for (auto* head : {&decoder.alpha, &decoder.color, &decoder.rotation,
                     &decoder.scale}) {
    head->w1 *= s;
    head->b1 *= s;
    head->w2 *= s;
    head->b2 *= s;
  }
  for (size_t i = 0; i < d_offsets.size(); ++i) {
    d_offsets[i] *= s;
    d_offset_scale[i] *= s;
    d_f_mu[i] *= s;
    d_f_sigma[i] *= s;
  }
}

PipelineForward pipeline_forward(const Model& model, const Camera& cam,
                                 const RenderConfig& cfg,
                                 const std::vector<Feat>* eps_per_anchor) {
  PipelineForward fwd;
  const int n = model.anchor_count();
  const int k = model.k;

  // Visibility: anchors in front of the near plane.
  std::vector<int> vis;
  vis.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p_cam = cam.world_to_cam(model.anchors[i].position.cast<double>());
    if (p_cam.z() > cfg.z_near) vis.push_back(i);
  }

  fwd.visible.resize(vis.size());
  fwd.gaussians.resize(vis.size() * k);
  std::vector<uint8_t> degenerate(vis.size(), 0);

  parallel_for(static_cast<int>(vis.size()), cfg.threads, [&](int vi) {
    const int ai = vis[vi];
    const Anchor& anchor = model.anchors[ai];
    AnchorForward& af = fwd.visible[vi];
    af.anchor_index = ai;
    af.gauss_base = vi * k;
    af.f_field = model.field.query(anchor.position.cast<double>());
    af.eps = eps_per_anchor ? (*eps_per_anchor)[ai] : Feat::Zero();
    af.f_supp = sample_supp_feature(anchor.f_mu, anchor.f_sigma, af.eps);
    bool degen = false;
    const std::vector<NeuralGaussian> gs = spawn_neural_gaussians(
        anchor, cam, af.f_field, af.f_supp, model.decoders, &af.decode, &degen);
    if (degen) degenerate[vi] = 1;
    for (int i = 0; i < k; ++i) fwd.gaussians[af.gauss_base + i] = gs[i];
  });
  for (uint8_t d : degenerate) fwd.degenerate_view_dirs += d;

  fwd.render = rasterize(fwd.gaussians, cam, cfg);
  return fwd;
}

void pipeline_backward(const Model& model, const Camera& cam,
                       const RenderConfig& cfg, const PipelineForward& fwd,
                       const std::vector<double>& d_color_image,
                       const std::vector<double>& d_uncertainty_image,
                       const std::vector<Vec3>* d_extra_scale,
                       ModelGrads& grads) {
  const ScreenGrads sg = rasterize_backward(fwd.gaussians, fwd.render, cfg,
                                            d_color_image, d_uncertainty_image);
  const int k = model.k;
  const bool field_trainable = !model.field.frozen();

  for (const AnchorForward& af : fwd.visible) {
    const Anchor& anchor = model.anchors[af.anchor_index];
    const Vec3 s_anchor = anchor.offset_scale.cast<double>();

    AttributeUpstream up;
    up.d_opacity.assign(k, 0.0);
    up.d_color.assign(k, Vec3::Zero());
    up.d_rotation.assign(k, Vec4::Zero());
    up.d_scale.assign(k, Vec3::Zero());
    double d_u_anchor = 0.0;
    Vec3 d_s_total = Vec3::Zero();

    for (int i = 0; i < k; ++i) {
      const int gi = af.gauss_base + i;
      const NeuralGaussian& g = fwd.gaussians[gi];
      up.d_opacity[i] = sg.d_opacity[gi];
      up.d_color[i] = sg.d_color[gi];
      d_u_anchor += sg.d_uncertainty[gi];
      Vec3 d_scale = d_extra_scale ? (*d_extra_scale)[gi] : Vec3::Zero();

      const ProjectedGaussian& proj = fwd.render.projected[gi];
      if (proj.valid) {
        const Mat3 sigma_world = covariance_from(g.rotation, g.scale);
        Vec3 d_mean;
        Mat3 d_sigma;
        project_gaussian_backward(proj, cam, sigma_world, sg.d_mean2d[gi],
                                  sg.d_cov2d[gi], d_mean, d_sigma);
        Vec4 d_q;
        Vec3 d_s_cov;
        covariance_backward(g.rotation, g.scale, d_sigma, d_q, d_s_cov);
        up.d_rotation[i] = d_q;
        d_scale += d_s_cov;
        // mean_i = X + O_i (.) S
        const Vec3 o_i = anchor.offsets.row(i).cast<double>();
        grads.d_offsets[af.anchor_index].row(i) +=
            d_mean.cwiseProduct(s_anchor).transpose();
        d_s_total += d_mean.cwiseProduct(o_i);
      }
      up.d_scale[i] = d_scale;
    }

    DecoderInputGrads igrads;
    decoder_backward(model.decoders, af.decode, s_anchor, up, grads.decoder,
                     igrads);
    d_s_total += igrads.d_offset_scale;
    grads.d_offset_scale[af.anchor_index] += d_s_total;

    // f_supp = f_mu + eps (.) exp(f_sigma)
    grads.d_f_mu[af.anchor_index] += igrads.d_f_supp;
    for (int j = 0; j < kFeatureDim; ++j) {
      grads.d_f_sigma[af.anchor_index][j] +=
          igrads.d_f_supp[j] * af.eps[j] *
          std::exp(static_cast<double>(anchor.f_sigma[j]));
    }

    // Per-Gaussian uncertainty is the parent's u = ||exp(f_sigma)||.
    if (d_u_anchor != 0.0) {
      const double u = anchor_uncertainty(anchor.f_sigma);
      if (u > 0.0) {
        for (int j = 0; j < kFeatureDim; ++j) {
          grads.d_f_sigma[af.anchor_index][j] +=
              d_u_anchor * std::exp(2.0 * static_cast<double>(anchor.f_sigma[j])) / u;
        }
      }
    }

    if (field_trainable) {
      model.field.accumulate_query_backward(anchor.position.cast<double>(),
                                            igrads.d_f_field, grads.tables);
    }
  }
}

}  // namespace splatsr
