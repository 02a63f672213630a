#pragma once

#include "splatsr/camera.hpp"
#include "splatsr/common.hpp"
#include "splatsr/image.hpp"
#include "splatsr/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace splatsr {

enum class AnchorOrigin : int32_t { kInit = 0, kDensified = 1, kRefined = 2 };

// Spatial primitive that spawns k neural Gaussians. Persistent fields are
// stored as f32 so checkpoints round-trip bit-exactly.
struct Anchor {
  Vec3f position = Vec3f::Zero();
  int32_t level = 0;
  Vec3f offset_scale = Vec3f::Ones();            // componentwise > 0
  Eigen::Matrix<float, Eigen::Dynamic, 3> offsets;  // k x 3, unitless
  FeatF f_mu = FeatF::Zero();
  FeatF f_sigma = FeatF::Zero();                 // log-std of the supplementary feature
  float opacity_accum = 0.0f;                    // running-mean max opacity (prune window)
  AnchorOrigin origin = AnchorOrigin::kInit;

  int k() const { return static_cast<int>(offsets.rows()); }
};

// Renderable Gaussian decoded from an anchor for one view.
struct NeuralGaussian {
  Vec3 mean = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
  Vec3 scale = Vec3::Ones();
  double opacity = 0.0;              // [0, 1]
  Vec3 color = Vec3::Zero();         // [0, 1] per channel
  double uncertainty = 0.0;          // >= 0, copied from the parent anchor
};

struct SceneDataset {
  std::vector<Camera> cameras;            // native (LR) cameras
  std::vector<Image> lr_images;           // per camera
  std::vector<Image> hr_pseudo;           // optional, empty Image if absent
  std::vector<Image> hr_depth;            // optional metric depth, empty if absent
  int upscale_factor = 1;

  bool has_pseudo(int view) const {
    return view < static_cast<int>(hr_pseudo.size()) && !hr_pseudo[view].empty();
  }
  bool has_depth(int view) const {
    return view < static_cast<int>(hr_depth.size()) && !hr_depth[view].empty();
  }
  // Enforces hr dims == lr dims * upscale_factor on every provided map.
  void validate() const;
};

// ||exp(f_sigma)||_2, the per-anchor uncertainty scalar.
double anchor_uncertainty(const FeatF& f_sigma);

struct DecoderSet;
struct DecodeCache;

// View-dependent expansion of one anchor into its k neural Gaussians.
// delta_vc and d_vc are the camera-to-anchor distance and unit direction; a
// camera sitting exactly on the anchor degenerates to d_vc = (0,0,1) and sets
// *degenerate_view_dir (documented, not fatal).
std::vector<NeuralGaussian> spawn_neural_gaussians(
    const Anchor& anchor, const Camera& camera, const Feat& f_field,
    const Feat& f_supp, const DecoderSet& decoders,
    DecodeCache* cache = nullptr, bool* degenerate_view_dir = nullptr);

// Positions of the k Gaussians an anchor emits: X + O_i (.) S.
void anchor_gaussian_means(const Anchor& a, std::vector<Vec3>& out);

// Voxelizes points at size eps0 (floor convention) and places one anchor at
// each occupied voxel center. Offsets start as uniform noise in [-0.5, 0.5].
std::vector<Anchor> init_anchors(const std::vector<Vec3>& points, double eps0,
                                 int k, float sigma_init, Rng& rng);

// Removes anchors whose running-mean max opacity is below the threshold.
// `seen` marks anchors with at least one accumulated sample; unseen anchors
// are kept. Returns the number removed; `removed_indices` (optional) receives
// the pruned positions in ascending order.
size_t prune_anchors(std::vector<Anchor>& anchors, double opacity_threshold,
                     const std::vector<uint8_t>& seen,
                     std::vector<int>* removed_indices = nullptr);

// Binary anchor file: magic "SGSA", u32 LE version=1, u32 LE count, u32 LE k,
// then per-anchor little-endian f32 fields in declaration order.
std::vector<uint8_t> serialize_anchors(const std::vector<Anchor>& anchors, int k);
std::vector<Anchor> deserialize_anchors(const uint8_t* bytes, size_t n);
void save_anchors(const std::vector<Anchor>& anchors, int k, const std::string& path);
std::vector<Anchor> load_anchors(const std::string& path);

}  // namespace splatsr
