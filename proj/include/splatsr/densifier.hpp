#pragma once

#include "splatsr/camera.hpp"
#include "splatsr/common.hpp"
#include "splatsr/image.hpp"
#include "splatsr/rng.hpp"
#include "splatsr/scene_model.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace splatsr {

// Backprojected under-reconstructed pixel.
struct CandidatePoint {
  Vec3 position = Vec3::Zero();
  int view_id = 0;
  int pixel_u = 0;
  int pixel_v = 0;
  double err = 0.0;
};

struct VoxelKey {
  int64_t i = 0, j = 0, k = 0;
  auto operator<=>(const VoxelKey&) const = default;
};

// Per-level vote tallies: count plus the distinct contributing views.
struct VoteGrid {
  double base_voxel_size = 0.0;             // eps at level 0
  int levels = 0;                           // adjacent levels shrink by 4x
  std::vector<std::map<VoxelKey, std::pair<int, std::set<int>>>> votes;

  double voxel_size(int level) const;
  void add(const CandidatePoint& c);
};

struct DensifyConfig {
  double base_voxel_size = 0.1;    // eps at level 0
  int levels = 3;                  // voting levels
  int theta0 = 3;                  // votes needed at level 0; level l needs theta0*4^l
  int min_views = 2;               // distinct-view gate
  double tau_err = 0.08;           // error gate for candidate collection
  int max_candidates_per_view = 50000;
};

VoxelKey voxelize(const Vec3& p, double eps);
Vec3 voxel_center(const VoxelKey& key, double eps);

// Lifts pixel (u, v) at metric depth d into world space:
// X = R^T (K^-1 [u d, v d, d]^T - t).
Vec3 backproject_pixel(const Camera& cam, double u, double v, double d);

// One candidate per pixel with errmap > tau_err and a valid (positive,
// finite, in-range) depth; capped at max_candidates_per_view by top error.
std::vector<CandidatePoint> collect_candidates(const Image& errmap,
                                               const Image& depthmap,
                                               const Camera& cam, int view_id,
                                               const DensifyConfig& cfg,
                                               double max_valid_depth);

// Multi-resolution voxel voting. A voxel grows one anchor at its center when
// its vote count reaches the level threshold, enough distinct views agree,
// and no anchor already occupies it. Finer levels run first; an anchor grown
// at a fine level suppresses its coarser ancestors for the round.
std::vector<Anchor> vote_and_grow(const std::vector<CandidatePoint>& candidates,
                                  const DensifyConfig& cfg,
                                  const std::vector<Anchor>& existing,
                                  int k, float sigma_init, Rng& rng);

// Splits every anchor with uncertainty above the threshold into two children
// on the next-finer lattice (voxel size eps/4), sampled in opposite
// directions from the parent's voxel center. Parents are kept; children
// inherit f_mu and reset f_sigma.
std::vector<Anchor> refine_uncertain_anchors(const std::vector<Anchor>& anchors,
                                             double u_threshold,
                                             double base_voxel_size,
                                             float sigma_init, Rng& rng);

// Joint bilateral upsampling of an LR depth map guided by the HR image.
// sigma_spatial is in LR pixels; sigma_range acts on guide-color distance.
Image upsample_depth_guided(const Image& lr_depth, const Image& hr_image,
                            int factor, double sigma_spatial = 1.0,
                            double sigma_range = 0.1);

// JSON-lines debug dumps.
std::string candidates_to_jsonl(const std::vector<CandidatePoint>& candidates);
std::string votes_to_jsonl(const VoteGrid& grid);

}  // namespace splatsr
