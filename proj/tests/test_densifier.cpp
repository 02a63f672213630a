#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testers.hpp"

#include "splatsr/densifier.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>

using namespace splatsr;

namespace {

std::vector<CandidatePoint> random_candidates(Rng& rng, int n, double extent,
                                              int n_views) {
  std::vector<CandidatePoint> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].position = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                           rng.uniform(-extent, extent));
    out[i].view_id = rng.uniform_int(0, n_views - 1);
    out[i].pixel_u = rng.uniform_int(0, 255);
    out[i].pixel_v = rng.uniform_int(0, 255);
    out[i].err = rng.uniform(0.09, 1.0);
  }
  return out;
}

// Clustered clouds so some voxels actually pass the vote thresholds.
std::vector<CandidatePoint> clustered_candidates(Rng& rng, int n_clusters,
                                                 int per_cluster, double extent,
                                                 double cluster_radius,
                                                 int n_views) {
  std::vector<CandidatePoint> out;
  for (int c = 0; c < n_clusters; ++c) {
    const Vec3 center(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                      rng.uniform(-extent, extent));
    for (int i = 0; i < per_cluster; ++i) {
      CandidatePoint p;
      p.position = center + Vec3(rng.uniform(-cluster_radius, cluster_radius),
                                 rng.uniform(-cluster_radius, cluster_radius),
                                 rng.uniform(-cluster_radius, cluster_radius));
      p.view_id = rng.uniform_int(0, n_views - 1);
      p.pixel_u = rng.uniform_int(0, 255);
      p.pixel_v = rng.uniform_int(0, 255);
      p.err = rng.uniform(0.09, 1.0);
      out.push_back(p);
    }
  }
  return out;
}

bool same_grown_set(const std::vector<Anchor>& got,
                    const std::vector<std::pair<Vec3, int>>& want) {
  if (got.size() != want.size()) return false;
  std::set<std::tuple<long long, long long, long long, int>> a, b;
  auto key = [](const Vec3& p, int level) {
    return std::make_tuple(static_cast<long long>(std::llround(p.x() * 1e6)),
                           static_cast<long long>(std::llround(p.y() * 1e6)),
                           static_cast<long long>(std::llround(p.z() * 1e6)), level);
  };
  for (const Anchor& g : got) a.insert(key(g.position.cast<double>(), g.level));
  for (const auto& [p, l] : want) b.insert(key(p, l));
  return a == b;
}

}  // namespace

TEST_CASE("backproject: identity camera") {
  Camera cam;
  cam.id = 0;
  cam.width = 2;
  cam.height = 2;
  cam.fx = cam.fy = 1.0;
  cam.cx = cam.cy = 0.0;
  const Vec3 x = backproject_pixel(cam, 0.0, 0.0, 1.0);
  CHECK((x - Vec3(0, 0, 1)).norm() <= 1e-12);
}

TEST_CASE("backproject: project round trip") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Camera cam = testers::random_camera(rng, 64, 48);
    const double u = rng.uniform(0, 64), v = rng.uniform(0, 48);
    const double d = rng.uniform(0.2, 20.0);
    const Vec3 x = backproject_pixel(cam, u, v, d);
    Vec2 pix;
    double depth;
    cam.project(x, pix, depth);
    CHECK(std::abs(pix.x() - u) <= 1e-6);
    CHECK(std::abs(pix.y() - v) <= 1e-6);
    CHECK(std::abs(depth - d) <= 1e-6);
  }
}

TEST_CASE("backproject: camera translation shifts the point rigidly") {
  Rng rng(3);
  Camera cam = testers::random_camera(rng, 32, 32);
  const Vec3 x0 = backproject_pixel(cam, 10.5, 20.5, 2.0);
  const Vec3 delta(0.3, -0.7, 1.1);
  Camera moved = cam;
  // Moving the camera center by delta in world space: t' = -R (C + delta).
  moved.t = cam.t - cam.R * delta;
  const Vec3 x1 = backproject_pixel(moved, 10.5, 20.5, 2.0);
  CHECK((x1 - (x0 + delta)).norm() <= 1e-9);
}

TEST_CASE("backproject rejects non-positive depth") {
  Camera cam = testers::look_at_camera(Vec3(0, 0, -3), 8, 8, 6.0);
  CHECK_THROWS_AS(backproject_pixel(cam, 1, 1, 0.0), DataError);
}

TEST_CASE("collect_candidates: quiet error map yields nothing") {
  const Camera cam = testers::look_at_camera(Vec3(0, 0, -3), 16, 16, 12.0);
  Image err(16, 16, 1, 0.05);
  Image depth(16, 16, 1, 3.0);
  DensifyConfig cfg;
  CHECK(collect_candidates(err, depth, cam, 0, cfg, 99.0).empty());
}

TEST_CASE("collect_candidates: single hot pixel") {
  const Camera cam = testers::look_at_camera(Vec3(0, 0, -3), 16, 16, 12.0);
  Image err(16, 16, 1, 0.0);
  err.at(5, 9, 0) = 0.5;
  Image depth(16, 16, 1, 3.0);
  DensifyConfig cfg;
  const auto cands = collect_candidates(err, depth, cam, 7, cfg, 99.0);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].view_id == 7);
  CHECK(cands[0].pixel_u == 5);
  CHECK(cands[0].pixel_v == 9);
  const Vec3 expect = backproject_pixel(cam, 5.5, 9.5, 3.0);
  CHECK((cands[0].position - expect).norm() <= 1e-12);
}

TEST_CASE("collect_candidates equals the brute-force double loop") {
  Rng rng(4);
  const Camera cam = testers::random_camera(rng, 24, 20);
  Image err(24, 20, 1), depth(24, 20, 1);
  for (double& v : err.data) v = rng.uniform(0, 0.2);
  for (double& v : depth.data) v = rng.uniform(-0.5, 6.0);  // some invalid
  DensifyConfig cfg;
  const auto got = collect_candidates(err, depth, cam, 3, cfg, 5.0);
  std::vector<CandidatePoint> want;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      const double e = err.at(x, y, 0);
      const double d = depth.at(x, y, 0);
      if (!(e > cfg.tau_err) || !(d > 0.0) || d >= 5.0) continue;
      CandidatePoint c;
      c.position = cam.backproject(x + 0.5, y + 0.5, d);
      c.view_id = 3;
      c.pixel_u = x;
      c.pixel_v = y;
      c.err = e;
      want.push_back(c);
    }
  }
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].pixel_u == want[i].pixel_u);
    CHECK(got[i].pixel_v == want[i].pixel_v);
    CHECK((got[i].position - want[i].position).norm() == 0.0);
  }
}

TEST_CASE("collect_candidates caps by top error") {
  Rng rng(5);
  const Camera cam = testers::random_camera(rng, 16, 16);
  Image err(16, 16, 1), depth(16, 16, 1, 2.0);
  for (double& v : err.data) v = rng.uniform(0.1, 1.0);
  DensifyConfig cfg;
  cfg.max_candidates_per_view = 40;
  const auto got = collect_candidates(err, depth, cam, 0, cfg, 99.0);
  REQUIRE(got.size() == 40);
  // The kept set must be exactly the 40 largest errors.
  std::vector<double> all(err.data.begin(), err.data.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  const double cutoff = all[39];
  for (const auto& c : got) CHECK(c.err >= cutoff);
}

TEST_CASE("vote_and_grow: single candidate below threshold") {
  Rng rng(6);
  DensifyConfig cfg;
  cfg.base_voxel_size = 0.2;
  cfg.theta0 = 2;
  cfg.min_views = 1;
  std::vector<CandidatePoint> one = random_candidates(rng, 1, 0.5, 1);
  const auto grown = vote_and_grow(one, cfg, {}, 5, 1e-4f, rng);
  CHECK(grown.empty());
}

TEST_CASE("vote_and_grow: single-view votes fail the multi-view gate") {
  Rng rng(7);
  DensifyConfig cfg;
  cfg.base_voxel_size = 1.0;
  cfg.theta0 = 3;
  cfg.min_views = 2;
  cfg.levels = 1;
  std::vector<CandidatePoint> cands;
  for (int i = 0; i < 5; ++i) {
    CandidatePoint c;
    c.position = Vec3(0.1 + 0.01 * i, 0.1, 0.1);  // same voxel
    c.view_id = 0;                                // one view only
    c.pixel_u = i;
    c.pixel_v = 0;
    c.err = 0.5;
    cands.push_back(c);
  }
  Rng rng2(8);
  CHECK(vote_and_grow(cands, cfg, {}, 5, 1e-4f, rng2).empty());
  // The same votes from two views pass.
  cands[0].view_id = 1;
  Rng rng3(9);
  CHECK(vote_and_grow(cands, cfg, {}, 5, 1e-4f, rng3).size() == 1);
}

TEST_CASE("vote_and_grow matches the brute-force grouping oracle") {
  Rng rng(10);
  for (int trial = 0; trial < 6; ++trial) {
    DensifyConfig cfg;
    cfg.base_voxel_size = 0.4;
    cfg.levels = 3;
    cfg.theta0 = 3;
    cfg.min_views = 2;
    const auto cands = clustered_candidates(rng, 20, 60, 1.5, 0.05, 4);
    // A few existing anchors to exercise the occupancy gate.
    Rng arng(100 + trial);
    std::vector<Anchor> existing;
    for (int i = 0; i < 5; ++i) {
      Anchor a;
      a.position = Vec3f(static_cast<float>(arng.uniform(-1.5, 1.5)),
                         static_cast<float>(arng.uniform(-1.5, 1.5)),
                         static_cast<float>(arng.uniform(-1.5, 1.5)));
      a.offsets.resize(5, 3);
      a.offsets.setZero();
      existing.push_back(a);
    }
    Rng grow_rng(200 + trial);
    const auto grown = vote_and_grow(cands, cfg, existing, 5, 1e-4f, grow_rng);
    const auto want = testers::vote_oracle(cands, cfg, existing);
    CHECK(same_grown_set(grown, want));
  }
}

TEST_CASE("vote_and_grow: adding candidates never removes grown anchors") {
  Rng rng(11);
  DensifyConfig cfg;
  cfg.base_voxel_size = 0.4;
  cfg.levels = 2;
  cfg.theta0 = 3;
  cfg.min_views = 2;
  auto cands = clustered_candidates(rng, 10, 40, 1.0, 0.04, 3);
  Rng r1(1), r2(1);
  const auto base = vote_and_grow(cands, cfg, {}, 5, 1e-4f, r1);
  auto more = cands;
  const auto extra = clustered_candidates(rng, 5, 40, 1.0, 0.04, 3);
  more.insert(more.end(), extra.begin(), extra.end());
  const auto grown = vote_and_grow(more, cfg, {}, 5, 1e-4f, r2);
  // Superset on (position, level) keys.
  std::set<std::tuple<long long, long long, long long, int>> grown_keys;
  for (const Anchor& a : grown) {
    grown_keys.insert({static_cast<long long>(std::llround(a.position.x() * 1e6)),
                       static_cast<long long>(std::llround(a.position.y() * 1e6)),
                       static_cast<long long>(std::llround(a.position.z() * 1e6)),
                       a.level});
  }
  for (const Anchor& a : base) {
    CHECK(grown_keys.count(
        {static_cast<long long>(std::llround(a.position.x() * 1e6)),
         static_cast<long long>(std::llround(a.position.y() * 1e6)),
         static_cast<long long>(std::llround(a.position.z() * 1e6)), a.level}));
  }
}

TEST_CASE("vote_and_grow: V_min=1, M=1 degenerates to count thresholding") {
  Rng rng(12);
  DensifyConfig cfg;
  cfg.base_voxel_size = 0.3;
  cfg.levels = 1;
  cfg.theta0 = 4;
  cfg.min_views = 1;
  const auto cands = clustered_candidates(rng, 15, 10, 1.0, 0.05, 3);
  Rng grow_rng(13);
  const auto grown = vote_and_grow(cands, cfg, {}, 5, 1e-4f, grow_rng);
  // Simple count-per-voxel oracle.
  std::map<std::tuple<long long, long long, long long>, int> counts;
  for (const auto& c : cands) {
    counts[{static_cast<long long>(std::floor(c.position.x() / 0.3)),
            static_cast<long long>(std::floor(c.position.y() / 0.3)),
            static_cast<long long>(std::floor(c.position.z() / 0.3))}]++;
  }
  size_t expect = 0;
  for (const auto& [k, n] : counts) {
    if (n >= 4) ++expect;
  }
  CHECK(grown.size() == expect);
}

TEST_CASE("no duplicate (voxel, level) pairs after growth plus refinement") {
  Rng rng(14);
  DensifyConfig cfg;
  cfg.base_voxel_size = 0.4;
  cfg.levels = 3;
  cfg.theta0 = 3;
  cfg.min_views = 2;
  const auto cands = clustered_candidates(rng, 25, 50, 1.2, 0.04, 4);
  Rng grow_rng(15);
  std::vector<Anchor> anchors = vote_and_grow(cands, cfg, {}, 5, 1e-4f, grow_rng);
  // Mark every anchor maximally uncertain so refinement splits all of them.
  for (Anchor& a : anchors) a.f_sigma = FeatF::Constant(1.0f);
  const auto children =
      refine_uncertain_anchors(anchors, 0.5, cfg.base_voxel_size, 1e-4f, grow_rng);
  std::vector<Anchor> all = anchors;
  all.insert(all.end(), children.begin(), children.end());
  std::set<std::tuple<long long, long long, long long, int>> keys;
  for (const Anchor& a : all) {
    const double eps = cfg.base_voxel_size / std::pow(4.0, a.level);
    const VoxelKey k = voxelize(a.position.cast<double>(), eps);
    const auto tup = std::make_tuple(k.i, k.j, k.k, a.level);
    CHECK(keys.count(tup) == 0);
    keys.insert(tup);
  }
}

TEST_CASE("refine: nothing above threshold leaves the set unchanged") {
  std::vector<Anchor> anchors(3);
  for (Anchor& a : anchors) {
    a.offsets.resize(5, 3);
    a.offsets.setZero();
    a.f_sigma = FeatF::Constant(-9.0f);  // tiny uncertainty
  }
  Rng rng(16);
  CHECK(refine_uncertain_anchors(anchors, 1.0, 0.4, 1e-4f, rng).empty());
}

TEST_CASE("refine: children land on the quarter lattice") {
  SUBCASE("power-of-two voxel sizes are exactly representable") {
    Rng rng(17);
    std::vector<Anchor> anchors;
    Anchor a;
    a.position = Vec3f(0.1f, 0.18f, 0.05f);
    a.level = 0;
    a.offsets.resize(5, 3);
    a.offsets.setZero();
    a.f_mu = FeatF::Constant(0.25f);
    a.f_sigma = FeatF::Constant(2.0f);  // very uncertain
    anchors.push_back(a);
    const double eps0 = 0.5;
    const auto children = refine_uncertain_anchors(anchors, 0.1, eps0, 1e-4f, rng);
    REQUIRE(!children.empty());
    const double eps_child = 0.125;
    for (const Anchor& c : children) {
      CHECK(c.level == 1);
      for (int ax = 0; ax < 3; ++ax) {
        const double q = static_cast<double>(c.position[ax]) / eps_child;
        CHECK(std::abs(q - (std::floor(q) + 0.5)) <= 1e-9);
      }
      CHECK(c.f_mu[0] == 0.25f);
      CHECK(c.f_sigma[0] == doctest::Approx(std::log(1e-4f)));
      CHECK(c.origin == AnchorOrigin::kRefined);
      CHECK(c.offset_scale[0] == doctest::Approx(eps_child));
    }
  }
  SUBCASE("the stored f32 position stays on the lattice at storage precision") {
    // eps = 0.04 -> children on the 0.01 lattice. Lattice points are not
    // exactly representable in f32, so the residual is bounded by the
    // position's rounding, not by double arithmetic.
    Rng rng(18);
    Anchor a;
    a.position = Vec3f(0.02f, 0.03f, 0.01f);
    a.level = 0;
    a.offsets.resize(5, 3);
    a.offsets.setZero();
    a.f_sigma = FeatF::Constant(2.0f);
    const auto children = refine_uncertain_anchors({a}, 0.1, 0.04, 1e-4f, rng);
    REQUIRE(!children.empty());
    for (const Anchor& c : children) {
      for (int ax = 0; ax < 3; ++ax) {
        const double q = static_cast<double>(c.position[ax]) / 0.01;
        const double nearest = std::llround(q - 0.5) + 0.5;
        CHECK(std::abs(q - nearest) <= 1e-6);
      }
    }
  }
}

TEST_CASE("refine: opposite samples land in distinct voxels") {
  // Monte-Carlo of the stated sampling scheme: offsets in opposite
  // directions with |offset| in [eps_child, eps_l / 2) from the voxel
  // center can never voxelize to the same key.
  Rng rng(18);
  const double eps_l = 0.16;
  const double eps_child = eps_l / 4.0;
  const Vec3 center(0.24, -0.24, 0.08);
  for (int trial = 0; trial < 10000; ++trial) {
    double dir[3];
    rng.unit_vector3(dir);
    const double mag = rng.uniform(eps_child, eps_l / 2.0);
    const Vec3 offset = mag * Vec3(dir[0], dir[1], dir[2]);
    const VoxelKey k0 = voxelize(center + offset, eps_child);
    const VoxelKey k1 = voxelize(center - offset, eps_child);
    CHECK(k0 != k1);
  }
}

TEST_CASE("refine: created children keep distinct keys, parent suppresses") {
  Rng rng(19);
  Anchor a;
  a.position = Vec3f(0.3f, -0.2f, 0.15f);
  a.level = 1;
  a.offsets.resize(5, 3);
  a.offsets.setZero();
  a.f_sigma = FeatF::Constant(2.0f);
  const double eps0 = 0.64;
  const double eps_child = eps0 / 4.0 / 4.0;
  int both = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto children = refine_uncertain_anchors({a}, 0.1, eps0, 1e-4f, rng);
    // A sample may fall into the voxel already holding the parent, in which
    // case only one child is added; never zero, never more than two.
    CHECK(children.size() >= 1);
    CHECK(children.size() <= 2);
    if (children.size() == 2) {
      const VoxelKey k0 = voxelize(children[0].position.cast<double>(), eps_child);
      const VoxelKey k1 = voxelize(children[1].position.cast<double>(), eps_child);
      CHECK(k0 != k1);
      ++both;
    }
  }
  CHECK(both > 1800);  // parent collisions are rare
}

TEST_CASE("upsample_depth_guided: constant depth stays constant") {
  Image lr(8, 8, 1, 2.5);
  Rng rng(19);
  Image guide(32, 32, 3);
  for (double& v : guide.data) v = rng.uniform(0, 1);
  const Image hr = upsample_depth_guided(lr, guide, 4, 1.0, 0.1);
  for (double v : hr.data) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("upsample_depth_guided: degenerate kernels at factor 1") {
  Rng rng(20);
  Image lr(16, 16, 1);
  for (double& v : lr.data) v = rng.uniform(1.0, 5.0);
  Image guide(16, 16, 3);
  for (double& v : guide.data) v = rng.uniform(0, 1);

  SUBCASE("huge range sigma reduces to a normalized spatial blur") {
    const double sigma_s = 1.0;
    const Image out = upsample_depth_guided(lr, guide, 1, sigma_s, 1e9);
    const int radius = 3;  // ceil(2.5 * 1.0) + margin used by the oracle below
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        double num = 0.0, den = 0.0;
        for (int py = y - radius + 1; py <= y + radius; ++py) {
          for (int px = x - radius + 1; px <= x + radius; ++px) {
            if (px < 0 || px >= 16 || py < 0 || py >= 16) continue;
            const double sd = (px - x) * (px - x) + (py - y) * (py - y);
            const double w = std::exp(-sd / (2 * sigma_s * sigma_s));
            num += w * lr.at(px, py, 0);
            den += w;
          }
        }
        CHECK(std::abs(out.at(x, y, 0) - num / den) <= 1e-9);
      }
    }
  }

  SUBCASE("vanishing spatial sigma reduces to the identity") {
    const Image out = upsample_depth_guided(lr, guide, 1, 1e-3, 0.1);
    for (int i = 0; i < 16 * 16; ++i) {
      CHECK(out.data[i] == doctest::Approx(lr.data[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("upsample_depth_guided: image edge keeps the depth edge sharp") {
  // Depth step aligned with a color edge; bicubic smears it, the joint
  // bilateral filter should keep the transition within one HR pixel.
  const int lw = 16, factor = 4, hw = lw * factor;
  Image lr(lw, lw, 1);
  Image guide(hw, hw, 3);
  // Depth plateaus kept inside [0,1] so the bicubic baseline is comparable.
  for (int y = 0; y < lw; ++y) {
    for (int x = 0; x < lw; ++x) {
      lr.at(x, y, 0) = x < lw / 2 ? 0.2 : 0.8;
    }
  }
  for (int y = 0; y < hw; ++y) {
    for (int x = 0; x < hw; ++x) {
      const double v = x < hw / 2 ? 0.1 : 0.9;
      for (int c = 0; c < 3; ++c) guide.at(x, y, c) = v;
    }
  }
  const Image jbu = upsample_depth_guided(lr, guide, factor, 1.5, 0.05);
  const Image bicubic = bicubic_upsample(lr, factor);

  auto transition_width = [&](const Image& img) {
    // Count columns whose center-row value is strictly between the plateaus.
    int w = 0;
    const int y = hw / 2;
    for (int x = 0; x < hw; ++x) {
      const double v = img.at(x, y, 0);
      if (v > 0.22 && v < 0.78) ++w;
    }
    return w;
  };
  CHECK(transition_width(jbu) <= 1);
  CHECK(transition_width(bicubic) >= factor);
}

TEST_CASE("debug dumps are valid JSON lines") {
  Rng rng(21);
  const auto cands = random_candidates(rng, 10, 1.0, 3);
  const std::string cjson = candidates_to_jsonl(cands);
  std::istringstream cs(cjson);
  std::string line;
  int n = 0;
  while (std::getline(cs, line)) {
    const auto doc = nlohmann::json::parse(line);
    CHECK(doc.contains("x"));
    CHECK(doc.contains("view"));
    CHECK(doc.contains("err"));
    ++n;
  }
  CHECK(n == 10);

  VoteGrid grid;
  grid.base_voxel_size = 0.3;
  grid.levels = 2;
  grid.votes.resize(2);
  for (const auto& c : cands) grid.add(c);
  const std::string vjson = votes_to_jsonl(grid);
  std::istringstream vs(vjson);
  int m = 0;
  while (std::getline(vs, line)) {
    const auto doc = nlohmann::json::parse(line);
    CHECK(doc.contains("i"));
    CHECK(doc.contains("l"));
    CHECK(doc.contains("count"));
    CHECK(doc.contains("views"));
    ++m;
  }
  CHECK(m > 0);
}
