#include "splatsr/config.hpp"
#include "splatsr/densifier.hpp"
#include "splatsr/synth.hpp"
#include "splatsr/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>

namespace {

using namespace splatsr;

// Fills voxel sizes left at 0 with the dataset's suggestion.
void resolve_voxel_sizes(TrainConfig& tc, const DatasetOnDisk& data) {
  if (tc.init_voxel_size <= 0.0) tc.init_voxel_size = data.suggested_voxel;
  if (tc.densify.base_voxel_size <= 0.0) {
    tc.densify.base_voxel_size = data.suggested_voxel;
  }
}

Camera find_camera(const DatasetOnDisk& data, int id) {
  for (const Camera& c : data.train.cameras) {
    if (c.id == id) return c;
  }
  for (const Camera& c : data.test_cameras) {
    if (c.id == id) return c;
  }
  throw DataError("camera id not found: " + std::to_string(id));
}

int run_synth(const AppConfig& cfg, const std::string& out_dir) {
  synth_scene(cfg.synth_spec(), out_dir, cfg.render_config());
  std::cout << "wrote synthetic dataset to " << out_dir << "\n";
  return 0;
}

int run_train_coarse(const AppConfig& cfg, const std::string& data_dir,
                     const std::string& out_path) {
  const DatasetOnDisk data = load_dataset_dir(data_dir);
  TrainConfig tc = cfg.train_config();
  resolve_voxel_sizes(tc, data);
  if (data.init_points.empty()) {
    throw DataError("dataset has no points.json for anchor initialization");
  }
  const Checkpoint ck = train_coarse(data.train, data.init_points, tc);
  ck.save(out_path);
  std::cout << "coarse checkpoint: " << out_path << " (" << ck.model.anchors.size()
            << " anchors)\n";
  return 0;
}

int run_train_fine(const AppConfig& cfg, const std::string& data_dir,
                   const std::string& ckpt_path, const std::string& out_path) {
  const DatasetOnDisk data = load_dataset_dir(data_dir);
  TrainConfig tc = cfg.train_config();
  resolve_voxel_sizes(tc, data);
  tc.upscale_factor = data.upscale_factor > 0 ? data.upscale_factor : tc.upscale_factor;
  const Checkpoint coarse = Checkpoint::load(ckpt_path);
  const Checkpoint fine = train_fine(coarse, data.train, tc);
  fine.save(out_path);
  std::cout << "fine checkpoint: " << out_path << " (" << fine.model.anchors.size()
            << " anchors)\n";
  return 0;
}

int run_render(const AppConfig& cfg, const std::string& ckpt_path,
               const std::string& data_dir, int camera_id, int scale,
               const std::string& out_path, const std::string& depth_path,
               const std::string& unc_path) {
  const Checkpoint ck = Checkpoint::load(ckpt_path);
  const DatasetOnDisk data = load_dataset_dir(data_dir);
  Camera cam = find_camera(data, camera_id);
  if (scale > 1) cam = cam.scaled(scale);
  const RenderOutput out = render_view(ck.model, cam, cfg.render_config());
  save_image(out.color_image(), out_path);
  if (!depth_path.empty()) save_sgsm(out.scalar_image(out.depth), depth_path);
  if (!unc_path.empty()) save_sgsm(out.scalar_image(out.uncertainty), unc_path);
  std::cout << "rendered camera " << camera_id << " -> " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& ref_path,
             const std::string& external_cmd) {
  const Image pred = load_image(pred_path);
  const Image ref = load_image(ref_path);
  const double p = psnr(pred, ref);
  const double s = ssim(pred, ref);
  std::cout << "psnr=" << (std::isinf(p) ? "inf" : std::to_string(p))
            << " ssim=" << s;
  if (!external_cmd.empty()) {
    // User-provided perceptual metric: command gets the two image paths and
    // prints one float.
    const std::string full = external_cmd + " " + pred_path + " " + ref_path;
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) throw DataError("cannot spawn external metric: " + external_cmd);
    double value = 0.0;
    const int matched = fscanf(pipe, "%lf", &value);
    const int rc = pclose(pipe);
    if (matched != 1 || rc != 0) {
      throw DataError("external metric failed: " + external_cmd);
    }
    std::cout << " external=" << value;
  }
  std::cout << "\n";
  return 0;
}

int run_densify_debug(const AppConfig& cfg, const std::string& ckpt_path,
                      const std::string& data_dir, const std::string& out_dir) {
  const Checkpoint ck = Checkpoint::load(ckpt_path);
  const DatasetOnDisk data = load_dataset_dir(data_dir);
  TrainConfig tc = cfg.train_config();
  resolve_voxel_sizes(tc, data);
  const int factor = data.upscale_factor > 0 ? data.upscale_factor : 1;

  std::vector<CandidatePoint> all;
  for (size_t v = 0; v < data.train.cameras.size(); ++v) {
    if (!data.train.has_pseudo(static_cast<int>(v))) continue;
    const Camera hr_cam = data.train.cameras[v].scaled(factor);
    const RenderOutput out = render_view(ck.model, hr_cam, tc.render);
    const Image errmap =
        render_error_map(out.color_image(), data.train.hr_pseudo[v]);
    Image depth;
    if (data.train.has_depth(static_cast<int>(v))) {
      depth = data.train.hr_depth[v];
    } else {
      RenderConfig dc = tc.render;
      dc.depth_log_space = false;
      const RenderOutput lr_out = render_view(ck.model, data.train.cameras[v], dc);
      depth = upsample_depth_guided(lr_out.scalar_image(lr_out.depth),
                                    data.train.hr_pseudo[v], factor,
                                    tc.depth_sigma_spatial, tc.depth_sigma_range);
    }
    const auto cands = collect_candidates(errmap, depth, hr_cam,
                                          static_cast<int>(v), tc.densify,
                                          0.99 * tc.render.z_far);
    all.insert(all.end(), cands.begin(), cands.end());
  }

  VoteGrid grid;
  grid.base_voxel_size = tc.densify.base_voxel_size;
  grid.levels = tc.densify.levels;
  grid.votes.resize(grid.levels);
  for (const CandidatePoint& c : all) grid.add(c);

  std::filesystem::create_directories(out_dir);
  const std::string cjson = candidates_to_jsonl(all);
  atomic_write_file(out_dir + "/candidates.jsonl", cjson.data(), cjson.size());
  const std::string vjson = votes_to_jsonl(grid);
  atomic_write_file(out_dir + "/votes.jsonl", vjson.data(), vjson.size());
  std::cout << all.size() << " candidates -> " << out_dir << "\n";
  return 0;
}

int run_upsample_depth(const std::string& lr_depth_path,
                       const std::string& guide_path, int factor,
                       double sigma_s, double sigma_r,
                       const std::string& out_path) {
  const Image lr_depth = load_sgsm(lr_depth_path);
  const Image guide = load_image(guide_path);
  const Image hr = upsample_depth_guided(lr_depth, guide, factor, sigma_s, sigma_r);
  save_sgsm(hr, out_path);
  std::cout << "upsampled depth -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splatting scene super-resolution trainer"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "Override config keys (path.to.key=value)");
  app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--threads", threads, "Worker thread cap");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out = "synth_scene";
  synth_cmd->add_option("--out", synth_out, "Output directory");

  auto* coarse_cmd = app.add_subcommand("train-coarse", "Stage-1 LR training");
  std::string coarse_data, coarse_out = "coarse.sgsc";
  coarse_cmd->add_option("--data", coarse_data, "Dataset directory")->required();
  coarse_cmd->add_option("--out", coarse_out, "Checkpoint path");

  auto* fine_cmd = app.add_subcommand("train-fine", "Stage-2 HR training");
  std::string fine_data, fine_ckpt, fine_out = "fine.sgsc";
  fine_cmd->add_option("--data", fine_data, "Dataset directory")->required();
  fine_cmd->add_option("--checkpoint", fine_ckpt, "Coarse checkpoint")->required();
  fine_cmd->add_option("--out", fine_out, "Checkpoint path");

  auto* render_cmd = app.add_subcommand("render", "Render one camera");
  std::string render_ckpt, render_data, render_out = "render.ppm";
  std::string render_depth, render_unc;
  int render_camera = 0, render_scale = 1;
  render_cmd->add_option("--checkpoint", render_ckpt)->required();
  render_cmd->add_option("--data", render_data, "Dataset directory")->required();
  render_cmd->add_option("--camera", render_camera, "Camera id");
  render_cmd->add_option("--scale", render_scale, "Intrinsics upscale factor");
  render_cmd->add_option("--out", render_out, "Color output (.ppm/.png)");
  render_cmd->add_option("--depth", render_depth, "Depth output (.sgsm)");
  render_cmd->add_option("--uncertainty", render_unc, "Uncertainty output (.sgsm)");

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between two images");
  std::string eval_pred, eval_ref, eval_external;
  eval_cmd->add_option("--pred", eval_pred)->required();
  eval_cmd->add_option("--ref", eval_ref)->required();
  eval_cmd->add_option("--external-metric", eval_external,
                       "Command printing one float for two image paths");

  auto* dd_cmd = app.add_subcommand("densify-debug", "Dump candidates and votes");
  std::string dd_ckpt, dd_data, dd_out = "densify_debug";
  dd_cmd->add_option("--checkpoint", dd_ckpt)->required();
  dd_cmd->add_option("--data", dd_data)->required();
  dd_cmd->add_option("--out", dd_out, "Output directory");

  auto* ud_cmd = app.add_subcommand("upsample-depth", "Guided depth upsampling");
  std::string ud_lr, ud_guide, ud_out = "hr_depth.sgsm";
  int ud_factor = 4;
  double ud_sigma_s = 1.0, ud_sigma_r = 0.1;
  ud_cmd->add_option("--lr-depth", ud_lr)->required();
  ud_cmd->add_option("--guide", ud_guide)->required();
  ud_cmd->add_option("--factor", ud_factor);
  ud_cmd->add_option("--sigma-s", ud_sigma_s);
  ud_cmd->add_option("--sigma-r", ud_sigma_r);
  ud_cmd->add_option("--out", ud_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig::defaults()
                                        : AppConfig::from_file(config_path);
    for (const std::string& ov : overrides) cfg.apply_override(ov);
    if (seed >= 0) {
      cfg.apply_override("train.seed=" + std::to_string(seed));
      cfg.apply_override("synth.seed=" + std::to_string(seed));
    }
    if (threads > 0) {
      cfg.apply_override("render.threads=" + std::to_string(threads));
    }

    if (*synth_cmd) return run_synth(cfg, synth_out);
    if (*coarse_cmd) return run_train_coarse(cfg, coarse_data, coarse_out);
    if (*fine_cmd) return run_train_fine(cfg, fine_data, fine_ckpt, fine_out);
    if (*render_cmd) {
      return run_render(cfg, render_ckpt, render_data, render_camera,
                        render_scale, render_out, render_depth, render_unc);
    }
    if (*eval_cmd) return run_eval(eval_pred, eval_ref, eval_external);
    if (*dd_cmd) return run_densify_debug(cfg, dd_ckpt, dd_data, dd_out);
    if (*ud_cmd) {
      return run_upsample_depth(ud_lr, ud_guide, ud_factor, ud_sigma_s,
                                ud_sigma_r, ud_out);
    }
  } catch (const splatsr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const splatsr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
