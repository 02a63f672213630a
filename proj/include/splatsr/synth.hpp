#pragma once

#include "splatsr/rasterizer.hpp"
#include "splatsr/scene_model.hpp"

#include <string>
#include <vector>

namespace splatsr {

// Synthetic oracle scene: a known Gaussian mixture rendered to disk so every
// downstream stage can be checked against ground truth.
struct SynthSceneSpec {
  int n_gaussians = 50;
  double extent = 1.0;
  int palette_size = 6;
  int n_train_views = 8;
  int n_test_views = 4;
  int lr_width = 64;
  int lr_height = 64;
  int upscale_factor = 4;   // 2 or 4
  double scale_min = 0.05;  // per-axis Gaussian scale range, in extent units
  double scale_max = 0.16;
  uint64_t seed = 7;
  std::string pseudo_mode = "oracle";  // "oracle" copies HR GT, "bicubic" upsamples LR
  double init_points_fraction = 1.0;   // fraction of GT means emitted as init points
};

// Writes cameras.json, cameras_test.json, lr/, lr_test/, hr_gt/, hr_gt_test/,
// hr_pseudo/, hr_depth/, points.json, meta.json under out_dir.
void synth_scene(const SynthSceneSpec& spec, const std::string& out_dir,
                 const RenderConfig& render_cfg);

// The on-disk dataset layout produced by synth (and accepted by the CLI).
struct DatasetOnDisk {
  SceneDataset train;
  std::vector<Camera> test_cameras;
  std::vector<Image> lr_test;
  std::vector<Image> hr_gt_test;
  std::vector<Image> hr_gt_train;
  std::vector<Vec3> init_points;
  double suggested_voxel = 0.1;
  int upscale_factor = 1;
};

DatasetOnDisk load_dataset_dir(const std::string& dir);

// Ring of inward-looking cameras around the origin.
std::vector<Camera> make_ring_cameras(int count, double radius, int width,
                                      int height, double focal,
                                      double azimuth_offset,
                                      double elevation_amplitude);

}  // namespace splatsr
