#include "splatsr/densifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splatsr {

VoxelKey voxelize(const Vec3& p, double eps) {
  return {static_cast<int64_t>(std::floor(p.x() / eps)),
          static_cast<int64_t>(std::floor(p.y() / eps)),
          static_cast<int64_t>(std::floor(p.z() / eps))};
}

Vec3 voxel_center(const VoxelKey& key, double eps) {
  return Vec3((key.i + 0.5) * eps, (key.j + 0.5) * eps, (key.k + 0.5) * eps);
}

double VoteGrid::voxel_size(int level) const {
  double eps = base_voxel_size;
  for (int l = 0; l < level; ++l) eps /= 4.0;
  return eps;
}

void VoteGrid::add(const CandidatePoint& c) {
  for (int l = 0; l < levels; ++l) {
    auto& entry = votes[l][voxelize(c.position, voxel_size(l))];
    entry.first += 1;
    entry.second.insert(c.view_id);
  }
}

Vec3 backproject_pixel(const Camera& cam, double u, double v, double d) {
  if (!(d > 0.0)) throw DataError("backproject_pixel: depth must be positive");
  return cam.backproject(u, v, d);
}

std::vector<CandidatePoint> collect_candidates(const Image& errmap,
                                               const Image& depthmap,
                                               const Camera& cam, int view_id,
                                               const DensifyConfig& cfg,
                                               double max_valid_depth) {
  if (errmap.width != cam.width || errmap.height != cam.height ||
      depthmap.width != cam.width || depthmap.height != cam.height) {
    throw DataError("collect_candidates: map dimensions do not match camera");
  }
  std::vector<CandidatePoint> out;
  for (int y = 0; y < errmap.height; ++y) {
    for (int x = 0; x < errmap.width; ++x) {
      const double err = errmap.at(x, y, 0);
      if (!(err > cfg.tau_err)) continue;
      const double d = depthmap.at(x, y, 0);
      if (!std::isfinite(d) || d <= 0.0 || d >= max_valid_depth) continue;
      CandidatePoint c;
      c.position = backproject_pixel(cam, x + 0.5, y + 0.5, d);
      c.view_id = view_id;
      c.pixel_u = x;
      c.pixel_v = y;
      c.err = err;
      out.push_back(c);
    }
  }
  if (static_cast<int>(out.size()) > cfg.max_candidates_per_view) {
    std::sort(out.begin(), out.end(), [](const CandidatePoint& a,
                                         const CandidatePoint& b) {
      if (a.err != b.err) return a.err > b.err;
      return std::tie(a.pixel_v, a.pixel_u) < std::tie(b.pixel_v, b.pixel_u);
    });
    out.resize(cfg.max_candidates_per_view);
    std::sort(out.begin(), out.end(), [](const CandidatePoint& a,
                                         const CandidatePoint& b) {
      return std::tie(a.pixel_v, a.pixel_u) < std::tie(b.pixel_v, b.pixel_u);
    });
  }
  return out;
}

std::vector<Anchor> vote_and_grow(const std::vector<CandidatePoint>& candidates,
                                  const DensifyConfig& cfg,
                                  const std::vector<Anchor>& existing,
                                  int k, float sigma_init, Rng& rng) {
  // Deterministic reduction: candidates sorted by (view, pixel) before voting.
  std::vector<CandidatePoint> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(), [](const CandidatePoint& a,
                                             const CandidatePoint& b) {
    return std::tie(a.view_id, a.pixel_v, a.pixel_u) <
           std::tie(b.view_id, b.pixel_v, b.pixel_u);
  });

  VoteGrid grid;
  grid.base_voxel_size = cfg.base_voxel_size;
  grid.levels = cfg.levels;
  grid.votes.resize(cfg.levels);
  for (const CandidatePoint& c : sorted) grid.add(c);

  // Occupancy per level covers existing anchors and anything grown this
  // round; a fine-level anchor therefore suppresses its coarser ancestors.
  std::vector<std::set<VoxelKey>> occupied(cfg.levels);
  auto occupy = [&](const Vec3& pos) {
    for (int l = 0; l < cfg.levels; ++l) {
      occupied[l].insert(voxelize(pos, grid.voxel_size(l)));
    }
  };
  for (const Anchor& a : existing) occupy(a.position.cast<double>());

  const float log_sigma = std::log(sigma_init);
  std::vector<Anchor> grown;
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const double eps_l = grid.voxel_size(l);
    int threshold = cfg.theta0;
    for (int i = 0; i < l; ++i) threshold *= 4;
    for (const auto& [key, tally] : grid.votes[l]) {
      if (tally.first < threshold) continue;
      if (static_cast<int>(tally.second.size()) < cfg.min_views) continue;
      if (occupied[l].count(key)) continue;
      Anchor a;
      const Vec3 center = voxel_center(key, eps_l);
      a.position = center.cast<float>();
      a.level = l;
      a.offset_scale = Vec3f::Constant(static_cast<float>(eps_l));
      a.offsets.resize(k, 3);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < 3; ++j) {
          a.offsets(i, j) = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
      }
      a.f_mu = FeatF::Zero();
      a.f_sigma = FeatF::Constant(log_sigma);
      a.origin = AnchorOrigin::kDensified;
      occupy(center);
      grown.push_back(std::move(a));
    }
  }
  return grown;
}

std::vector<Anchor> refine_uncertain_anchors(const std::vector<Anchor>& anchors,
                                             double u_threshold,
                                             double base_voxel_size,
                                             float sigma_init, Rng& rng) {
  auto level_eps = [&](int level) {
    double eps = base_voxel_size;
    for (int l = 0; l < level; ++l) eps /= 4.0;
    return eps;
  };

  // Occupancy sets per child level, built lazily from every anchor position.
  std::map<int, std::set<VoxelKey>> occupied;
  auto occupied_at = [&](int child_level) -> std::set<VoxelKey>& {
    auto it = occupied.find(child_level);
    if (it == occupied.end()) {
      std::set<VoxelKey> keys;
      const double eps = level_eps(child_level);
      for (const Anchor& a : anchors) {
        keys.insert(voxelize(a.position.cast<double>(), eps));
      }
      it = occupied.emplace(child_level, std::move(keys)).first;
    }
    return it->second;
  };

  const int k = anchors.empty() ? 0 : anchors.front().k();
  const float log_sigma = std::log(sigma_init);
  std::vector<Anchor> children;
  for (const Anchor& parent : anchors) {
    if (!(anchor_uncertainty(parent.f_sigma) > u_threshold)) continue;
    const int l = parent.level;
    const double eps_l = level_eps(l);
    const double eps_child = eps_l / 4.0;
    const Vec3 center =
        voxel_center(voxelize(parent.position.cast<double>(), eps_l), eps_l);

    // Opposite-direction samples with |offset| in [eps_child, eps_l/2) stay
    // inside the parent voxel and always land in distinct child voxels.
    double dir[3];
    rng.unit_vector3(dir);
    const double mag = rng.uniform(eps_child, eps_l / 2.0);
    const Vec3 offset = mag * Vec3(dir[0], dir[1], dir[2]);

    std::set<VoxelKey>& occ = occupied_at(l + 1);
    for (int sgn = 0; sgn < 2; ++sgn) {
      const Vec3 sample = sgn == 0 ? Vec3(center + offset) : Vec3(center - offset);
      const VoxelKey key = voxelize(sample, eps_child);
      if (occ.count(key)) continue;
      occ.insert(key);
      Anchor child;
      child.position = voxel_center(key, eps_child).cast<float>();
      child.level = l + 1;
      child.offset_scale = Vec3f::Constant(static_cast<float>(eps_child));
      child.offsets.resize(k, 3);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < 3; ++j) {
          child.offsets(i, j) = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
      }
      child.f_mu = parent.f_mu;
      child.f_sigma = FeatF::Constant(log_sigma);
      child.origin = AnchorOrigin::kRefined;
      children.push_back(std::move(child));
    }
  }
  return children;
}

Image upsample_depth_guided(const Image& lr_depth, const Image& hr_image,
                            int factor, double sigma_spatial,
                            double sigma_range) {
  if (lr_depth.channels != 1) throw DataError("depth map must have 1 channel");
  if (hr_image.width != lr_depth.width * factor ||
      hr_image.height != lr_depth.height * factor) {
    throw DataError("guide image dims must be LR dims * factor");
  }
  Image out(hr_image.width, hr_image.height, 1);
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma_spatial)));
  const double inv_2ss = 1.0 / (2.0 * sigma_spatial * sigma_spatial);
  const double inv_2sr = 1.0 / (2.0 * sigma_range * sigma_range);
  const int ch = hr_image.channels;

  for (int qy = 0; qy < out.height; ++qy) {
    const double ly = (qy + 0.5) / factor - 0.5;
    const int py0 = static_cast<int>(std::floor(ly));
    for (int qx = 0; qx < out.width; ++qx) {
      const double lx = (qx + 0.5) / factor - 0.5;
      const int px0 = static_cast<int>(std::floor(lx));
      double num = 0.0, den = 0.0;
      for (int py = py0 - radius + 1; py <= py0 + radius; ++py) {
        if (py < 0 || py >= lr_depth.height) continue;
        for (int px = px0 - radius + 1; px <= px0 + radius; ++px) {
          if (px < 0 || px >= lr_depth.width) continue;
          const double sd = (px - lx) * (px - lx) + (py - ly) * (py - ly);
          const double ws = std::exp(-sd * inv_2ss);
          // Guide sample at the HR position of this LR pixel's center.
          const int gx = std::clamp(
              static_cast<int>(std::llround((px + 0.5) * factor - 0.5)), 0,
              hr_image.width - 1);
          const int gy = std::clamp(
              static_cast<int>(std::llround((py + 0.5) * factor - 0.5)), 0,
              hr_image.height - 1);
          double cd = 0.0;
          for (int c = 0; c < ch; ++c) {
            const double diff = hr_image.at(qx, qy, c) - hr_image.at(gx, gy, c);
            cd += diff * diff;
          }
          const double wr = std::exp(-cd * inv_2sr);
          num += ws * wr * lr_depth.at(px, py, 0);
          den += ws * wr;
        }
      }
      if (den > 0.0) {
        out.at(qx, qy, 0) = num / den;
      } else {
        const int nx = std::clamp(static_cast<int>(std::llround(lx)), 0,
                                  lr_depth.width - 1);
        const int ny = std::clamp(static_cast<int>(std::llround(ly)), 0,
                                  lr_depth.height - 1);
        out.at(qx, qy, 0) = lr_depth.at(nx, ny, 0);
      }
    }
  }
  return out;
}

std::string candidates_to_jsonl(const std::vector<CandidatePoint>& candidates) {
  std::ostringstream os;
  os.precision(9);
  for (const CandidatePoint& c : candidates) {
    os << "{\"x\":" << c.position.x() << ",\"y\":" << c.position.y()
       << ",\"z\":" << c.position.z() << ",\"view\":" << c.view_id
       << ",\"err\":" << c.err << "}\n";
  }
  return os.str();
}

std::string votes_to_jsonl(const VoteGrid& grid) {
  std::ostringstream os;
  for (int l = 0; l < grid.levels; ++l) {
    for (const auto& [key, tally] : grid.votes[l]) {
      os << "{\"i\":" << key.i << ",\"j\":" << key.j << ",\"k\":" << key.k
         << ",\"l\":" << l << ",\"count\":" << tally.first
         << ",\"views\":" << tally.second.size() << "}\n";
    }
  }
  return os.str();
}

}  // namespace splatsr
