#include "splatsr/config.hpp"

#include "splatsr/synth.hpp"

#include <fstream>
#include <sstream>

namespace splatsr {

AppConfig AppConfig::defaults() {
  AppConfig cfg;
  cfg.doc = nlohmann::json{
      {"k", 5},
      {"sigma_init", 1e-4},
      {"field",
       {{"levels", 8},
        {"features_per_level", 2},
        {"table_size_log2", 14},
        {"base_resolution", 16},
        {"per_level_scale", 1.45},
        {"init_scale", 1e-4}}},
      {"render",
       {{"tile_size", 16},
        {"beta", 3.0},
        {"alpha_min", 1.0 / 255.0},
        {"t_min", 1e-4},
        {"alpha_max", 0.99},
        {"background", {0.0, 0.0, 0.0}},
        {"z_near", 0.01},
        {"z_far", 100.0},
        {"threads", 1}}},
      {"train",
       {{"coarse_iters", 3000},
        {"fine_iters", 1500},
        {"growth_interval", 100},
        {"refine_phase_iters", 1000},
        {"prune_window", 100},
        {"prune_threshold", 0.005},
        {"views_per_iter", 1},
        {"seed", 42},
        {"upscale_factor", 4},
        {"u_threshold_percentile", 90.0},
        {"init_voxel_size", 0.0},  // 0 = take the dataset suggestion
        {"lambda_ssim", 0.2},
        {"lambda_vol", 0.01},
        {"lambda_lpips", 0.5},
        {"lambda_u", 1e-4},
        {"detach_uncertainty_weight", true},
        {"use_uncertainty_weighted_loss", true},
        {"densify_enabled", true},
        {"refine_enabled", true},
        {"prune_enabled", true},
        {"pseudo_fallback_bicubic", true},
        {"lr_offsets", 0.01},
        {"lr_offsets_final", 1e-4},
        {"lr_offset_scale", 0.007},
        {"lr_f_mu", 0.0075},
        {"lr_f_sigma", 0.002},
        {"lr_tables", 0.01},
        {"lr_decoder", 0.002},
        {"log_interval", 50},
        {"log_path", ""}}},
      {"densify",
       {{"base_voxel_size", 0.0},  // 0 = take the dataset suggestion
        {"levels", 3},
        {"theta0", 3},
        {"min_views", 2},
        {"tau_err", 0.08},
        {"max_candidates_per_view", 50000}}},
      {"depth_upsample", {{"sigma_spatial", 1.0}, {"sigma_range", 0.1}}},
      {"synth",
       {{"n_gaussians", 50},
        {"extent", 1.0},
        {"palette_size", 6},
        {"n_train_views", 8},
        {"n_test_views", 4},
        {"lr_width", 64},
        {"lr_height", 64},
        {"upscale_factor", 4},
        {"scale_min", 0.05},
        {"scale_max", 0.16},
        {"seed", 7},
        {"pseudo_mode", "oracle"},
        {"init_points_fraction", 1.0}}}};
  return cfg;
}

namespace {
void merge_into(nlohmann::json& base, const nlohmann::json& extra,
                const std::string& path) {
  for (auto it = extra.begin(); it != extra.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      throw DataError("unknown config key: " + key_path);
    }
    if (it->is_object()) {
      merge_into(base[it.key()], *it, key_path);
    } else {
      base[it.key()] = *it;
    }
  }
}
}  // namespace

AppConfig AppConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  nlohmann::json user;
  in >> user;
  AppConfig cfg = defaults();
  merge_into(cfg.doc, user, "");
  return cfg;
}

void AppConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw DataError("override must be key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw DataError("empty override path");
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) throw DataError("unknown config key: " + path);
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf)) throw DataError("unknown config key: " + path);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // bare strings stay strings
  }
  (*node)[leaf] = parsed;
}

RenderConfig AppConfig::render_config() const {
  const auto& r = doc.at("render");
  RenderConfig rc;
  rc.tile_size = r.at("tile_size").get<int>();
  rc.beta = r.at("beta").get<double>();
  rc.alpha_min = r.at("alpha_min").get<double>();
  rc.t_min = r.at("t_min").get<double>();
  rc.alpha_max = r.at("alpha_max").get<double>();
  const auto& bg = r.at("background");
  rc.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
  rc.z_near = r.at("z_near").get<double>();
  rc.z_far = r.at("z_far").get<double>();
  rc.threads = r.at("threads").get<int>();
  return rc;
}

TrainConfig AppConfig::train_config() const {
  const auto& t = doc.at("train");
  TrainConfig tc;
  tc.coarse_iters = t.at("coarse_iters").get<int64_t>();
  tc.fine_iters = t.at("fine_iters").get<int64_t>();
  tc.growth_interval = t.at("growth_interval").get<int>();
  tc.refine_phase_iters = t.at("refine_phase_iters").get<int>();
  tc.prune_window = t.at("prune_window").get<int>();
  tc.prune_threshold = t.at("prune_threshold").get<double>();
  tc.views_per_iter = t.at("views_per_iter").get<int>();
  tc.seed = t.at("seed").get<uint64_t>();
  tc.upscale_factor = t.at("upscale_factor").get<int>();
  tc.u_threshold_percentile = t.at("u_threshold_percentile").get<double>();
  tc.k = doc.at("k").get<int>();
  tc.sigma_init = doc.at("sigma_init").get<float>();
  tc.init_voxel_size = t.at("init_voxel_size").get<double>();
  tc.loss_weights.lambda_ssim = t.at("lambda_ssim").get<double>();
  tc.loss_weights.lambda_vol = t.at("lambda_vol").get<double>();
  tc.loss_weights.lambda_lpips = t.at("lambda_lpips").get<double>();
  tc.lambda_u = t.at("lambda_u").get<double>();
  tc.detach_uncertainty_weight = t.at("detach_uncertainty_weight").get<bool>();
  tc.use_uncertainty_weighted_loss =
      t.at("use_uncertainty_weighted_loss").get<bool>();
  tc.densify_enabled = t.at("densify_enabled").get<bool>();
  tc.refine_enabled = t.at("refine_enabled").get<bool>();
  tc.prune_enabled = t.at("prune_enabled").get<bool>();
  tc.pseudo_fallback_bicubic = t.at("pseudo_fallback_bicubic").get<bool>();
  tc.lr_offsets = t.at("lr_offsets").get<double>();
  tc.lr_offsets_final = t.at("lr_offsets_final").get<double>();
  tc.lr_offset_scale = t.at("lr_offset_scale").get<double>();
  tc.lr_f_mu = t.at("lr_f_mu").get<double>();
  tc.lr_f_sigma = t.at("lr_f_sigma").get<double>();
  tc.lr_tables = t.at("lr_tables").get<double>();
  tc.lr_decoder = t.at("lr_decoder").get<double>();
  tc.log_interval = t.at("log_interval").get<int>();
  tc.log_path = t.at("log_path").get<std::string>();

  tc.render = render_config();

  const auto& f = doc.at("field");
  tc.field.levels = f.at("levels").get<int>();
  tc.field.features_per_level = f.at("features_per_level").get<int>();
  tc.field.table_size = 1u << f.at("table_size_log2").get<int>();
  tc.field.base_resolution = f.at("base_resolution").get<int>();
  tc.field.per_level_scale = f.at("per_level_scale").get<double>();
  tc.field.init_scale = f.at("init_scale").get<float>();

  const auto& d = doc.at("densify");
  tc.densify.base_voxel_size = d.at("base_voxel_size").get<double>();
  tc.densify.levels = d.at("levels").get<int>();
  tc.densify.theta0 = d.at("theta0").get<int>();
  tc.densify.min_views = d.at("min_views").get<int>();
  tc.densify.tau_err = d.at("tau_err").get<double>();
  tc.densify.max_candidates_per_view = d.at("max_candidates_per_view").get<int>();

  const auto& du = doc.at("depth_upsample");
  tc.depth_sigma_spatial = du.at("sigma_spatial").get<double>();
  tc.depth_sigma_range = du.at("sigma_range").get<double>();
  return tc;
}

SynthSceneSpec AppConfig::synth_spec() const {
  const auto& s = doc.at("synth");
  SynthSceneSpec spec;
  spec.n_gaussians = s.at("n_gaussians").get<int>();
  spec.extent = s.at("extent").get<double>();
  spec.palette_size = s.at("palette_size").get<int>();
  spec.n_train_views = s.at("n_train_views").get<int>();
  spec.n_test_views = s.at("n_test_views").get<int>();
  spec.lr_width = s.at("lr_width").get<int>();
  spec.lr_height = s.at("lr_height").get<int>();
  spec.upscale_factor = s.at("upscale_factor").get<int>();
  spec.scale_min = s.at("scale_min").get<double>();
  spec.scale_max = s.at("scale_max").get<double>();
  spec.seed = s.at("seed").get<uint64_t>();
  spec.pseudo_mode = s.at("pseudo_mode").get<std::string>();
  spec.init_points_fraction = s.at("init_points_fraction").get<double>();
  return spec;
}

}  // namespace splatsr
