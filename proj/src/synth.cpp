#include "splatsr/synth.hpp"

#include "splatsr/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace splatsr {

namespace fs = std::filesystem;

std::vector<Camera> make_ring_cameras(int count, double radius, int width,
                                      int height, double focal,
                                      double azimuth_offset,
                                      double elevation_amplitude) {
  std::vector<Camera> cams;
  cams.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double az = azimuth_offset + 2.0 * M_PI * i / count;
    const double el = elevation_amplitude * std::sin(2.0 * M_PI * i / count * 3.0);
    const Vec3 pos(radius * std::cos(el) * std::cos(az),
                   radius * std::sin(el),
                   radius * std::cos(el) * std::sin(az));
    const Vec3 forward = (-pos).normalized();  // look at the origin
    Vec3 up_hint(0, 1, 0);
    Vec3 right = up_hint.cross(forward);
    if (right.norm() < 1e-9) right = Vec3(1, 0, 0);
    right.normalize();
    const Vec3 up = forward.cross(right);

    Camera c;
    c.id = i;
    c.width = width;
    c.height = height;
    c.fx = c.fy = focal;
    c.cx = width / 2.0;
    c.cy = height / 2.0;
    c.R.row(0) = right.transpose();
    c.R.row(1) = up.transpose();
    c.R.row(2) = forward.transpose();
    c.t = -c.R * pos;
    cams.push_back(c);
  }
  return cams;
}

namespace {

std::string view_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03d.ppm", i);
  return buf;
}

std::string depth_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03d.sgsm", i);
  return buf;
}

}  // namespace

void synth_scene(const SynthSceneSpec& spec, const std::string& out_dir,
                 const RenderConfig& render_cfg) {
  if (spec.upscale_factor != 2 && spec.upscale_factor != 4) {
    throw DataError("synth: upscale factor must be 2 or 4");
  }
  Rng rng(spec.seed);
  fs::create_directories(out_dir);

  // Ground-truth Gaussian mixture.
  std::vector<Vec3> palette(spec.palette_size);
  for (Vec3& c : palette) {
    c = Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0));
  }
  std::vector<NeuralGaussian> scene(spec.n_gaussians);
  for (int i = 0; i < spec.n_gaussians; ++i) {
    NeuralGaussian& g = scene[i];
    // Rejection-sampled ball keeps the cloud roughly isotropic.
    Vec3 p;
    do {
      p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    } while (p.norm() > 1.0);
    g.mean = spec.extent * p;
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = q.norm() < 1e-9 ? Vec4(1, 0, 0, 0) : Vec4(q / q.norm());
    for (int j = 0; j < 3; ++j) {
      g.scale[j] = spec.extent * rng.uniform(spec.scale_min, spec.scale_max);
    }
    g.opacity = rng.uniform(0.6, 0.95);
    const Vec3 base = palette[i % spec.palette_size];
    for (int j = 0; j < 3; ++j) {
      g.color[j] = std::clamp(base[j] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
    }
    g.uncertainty = 0.0;
  }

  const double radius = 3.0 * spec.extent;
  const double focal = 0.6 * spec.lr_width;
  const std::vector<Camera> train_cams = make_ring_cameras(
      spec.n_train_views, radius, spec.lr_width, spec.lr_height, focal, 0.0, 0.35);
  std::vector<Camera> test_cams = make_ring_cameras(
      spec.n_test_views, radius, spec.lr_width, spec.lr_height, focal,
      M_PI / spec.n_train_views, 0.2);
  for (size_t i = 0; i < test_cams.size(); ++i) {
    test_cams[i].id = static_cast<int>(1000 + i);
  }

  save_cameras_json(train_cams, out_dir + "/cameras.json");
  save_cameras_json(test_cams, out_dir + "/cameras_test.json");

  RenderConfig rc = render_cfg;
  const int lr_maxval = 255 * spec.upscale_factor * spec.upscale_factor;

  auto emit_views = [&](const std::vector<Camera>& cams, const std::string& hr_dir,
                        const std::string& lr_dir, bool with_pseudo_and_depth) {
    for (size_t i = 0; i < cams.size(); ++i) {
      const Camera hr_cam = cams[i].scaled(spec.upscale_factor);
      const RenderOutput hr_out = rasterize(scene, hr_cam, rc);
      save_ppm(hr_out.color_image(), out_dir + "/" + hr_dir + "/" + view_name(static_cast<int>(i)));

      // LR ground truth is the exact box average of the quantized HR file;
      // maxval 255*factor^2 makes the stored values lossless.
      const Image hr_loaded =
          load_ppm(out_dir + "/" + hr_dir + "/" + view_name(static_cast<int>(i)));
      const Image lr = box_downsample(hr_loaded, spec.upscale_factor);
      save_ppm(lr, out_dir + "/" + lr_dir + "/" + view_name(static_cast<int>(i)),
               lr_maxval);

      if (with_pseudo_and_depth) {
        if (spec.pseudo_mode == "oracle") {
          save_ppm(hr_loaded, out_dir + "/hr_pseudo/" + view_name(static_cast<int>(i)));
        } else if (spec.pseudo_mode == "bicubic") {
          const Image lr_loaded =
              load_ppm(out_dir + "/" + lr_dir + "/" + view_name(static_cast<int>(i)));
          save_ppm(bicubic_upsample(lr_loaded, spec.upscale_factor),
                   out_dir + "/hr_pseudo/" + view_name(static_cast<int>(i)));
        } else {
          throw DataError("synth: unknown pseudo mode " + spec.pseudo_mode);
        }
        Image depth(hr_cam.width, hr_cam.height, 1);
        for (size_t p = 0; p < depth.data.size(); ++p) {
          depth.data[p] = std::exp(hr_out.depth[p]);
        }
        save_sgsm(depth, out_dir + "/hr_depth/" + depth_name(static_cast<int>(i)));
      }
    }
  };
  emit_views(train_cams, "hr_gt", "lr", true);
  emit_views(test_cams, "hr_gt_test", "lr_test", false);

  // Initialization points: a seeded subset of the true means.
  std::vector<int> order(spec.n_gaussians);
  for (int i = 0; i < spec.n_gaussians; ++i) order[i] = i;
  for (int i = spec.n_gaussians - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  }
  const int n_points = std::max(
      1, static_cast<int>(std::ceil(spec.init_points_fraction * spec.n_gaussians)));
  nlohmann::json points = nlohmann::json::array();
  for (int i = 0; i < n_points; ++i) {
    const Vec3& m = scene[order[i]].mean;
    points.push_back({m.x(), m.y(), m.z()});
  }
  const std::string ptext = points.dump() + "\n";
  atomic_write_file(out_dir + "/points.json", ptext.data(), ptext.size());

  nlohmann::json meta;
  meta["upscale_factor"] = spec.upscale_factor;
  meta["extent"] = spec.extent;
  meta["suggested_voxel"] = spec.extent / 6.0;
  meta["n_train_views"] = spec.n_train_views;
  meta["n_test_views"] = spec.n_test_views;
  meta["lr_width"] = spec.lr_width;
  meta["lr_height"] = spec.lr_height;
  meta["pseudo_mode"] = spec.pseudo_mode;
  meta["seed"] = spec.seed;
  meta["n_gaussians"] = spec.n_gaussians;
  const std::string mtext = meta.dump(2) + "\n";
  atomic_write_file(out_dir + "/meta.json", mtext.data(), mtext.size());
}

DatasetOnDisk load_dataset_dir(const std::string& dir) {
  DatasetOnDisk out;
  if (!fs::exists(dir + "/cameras.json")) {
    throw DataError("dataset: missing cameras.json in " + dir);
  }
  nlohmann::json meta;
  {
    std::ifstream in(dir + "/meta.json");
    if (in) in >> meta;
  }
  out.upscale_factor = meta.value("upscale_factor", 1);
  out.suggested_voxel = meta.value("suggested_voxel", 0.1);

  out.train.cameras = load_cameras_json(dir + "/cameras.json");
  out.train.upscale_factor = out.upscale_factor;
  const int n = static_cast<int>(out.train.cameras.size());
  out.train.lr_images.resize(n);
  out.train.hr_pseudo.resize(n);
  out.train.hr_depth.resize(n);
  out.hr_gt_train.resize(n);
  for (int i = 0; i < n; ++i) {
    out.train.lr_images[i] = load_ppm(dir + "/lr/" + view_name(i));
    const std::string pseudo = dir + "/hr_pseudo/" + view_name(i);
    if (fs::exists(pseudo)) out.train.hr_pseudo[i] = load_ppm(pseudo);
    const std::string depth = dir + "/hr_depth/" + depth_name(i);
    if (fs::exists(depth)) out.train.hr_depth[i] = load_sgsm(depth);
    const std::string gt = dir + "/hr_gt/" + view_name(i);
    if (fs::exists(gt)) out.hr_gt_train[i] = load_ppm(gt);
  }

  if (fs::exists(dir + "/cameras_test.json")) {
    out.test_cameras = load_cameras_json(dir + "/cameras_test.json");
    out.lr_test.resize(out.test_cameras.size());
    out.hr_gt_test.resize(out.test_cameras.size());
    for (size_t i = 0; i < out.test_cameras.size(); ++i) {
      const std::string lr = dir + "/lr_test/" + view_name(static_cast<int>(i));
      if (fs::exists(lr)) out.lr_test[i] = load_ppm(lr);
      const std::string gt = dir + "/hr_gt_test/" + view_name(static_cast<int>(i));
      if (fs::exists(gt)) out.hr_gt_test[i] = load_ppm(gt);
    }
  }

  if (fs::exists(dir + "/points.json")) {
    std::ifstream in(dir + "/points.json");
    nlohmann::json pts;
    in >> pts;
    for (const auto& p : pts) {
      out.init_points.emplace_back(p[0].get<double>(), p[1].get<double>(),
                                   p[2].get<double>());
    }
  }
  return out;
}

}  // namespace splatsr
