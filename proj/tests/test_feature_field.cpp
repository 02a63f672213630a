#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testers.hpp"

#include "splatsr/feature_field.hpp"

#include <filesystem>
#include <set>

using namespace splatsr;

namespace {

FeatureField make_field(uint64_t seed, float init_scale = 0.5f) {
  FeatureFieldConfig cfg;
  cfg.init_scale = init_scale;
  FeatureField field(cfg);
  Rng rng(seed);
  field.init_tables(rng);
  return field;
}

}  // namespace

TEST_CASE("contract: identity inside the unit ball") {
  const Vec3 x(0.3, -0.2, 0.1);
  CHECK((contract(x) - x).norm() == 0.0);
}

TEST_CASE("contract: hand-evaluated outside point") {
  const Vec3 c = contract(Vec3(2, 0, 0));
  CHECK(c.x() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(c.y() == 0.0);
  CHECK(c.z() == 0.0);
}

TEST_CASE("contract: asymptotic bound") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    double d[3];
    rng.unit_vector3(d);
    const Vec3 big = 1e6 * Vec3(d[0], d[1], d[2]);
    const double n = contract(big).norm();
    CHECK(n > 2.0 - 1e-5);
    CHECK(n <= 2.0);
  }
}

TEST_CASE("contract: continuity at the unit sphere") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    double d[3];
    rng.unit_vector3(d);
    const Vec3 unit(d[0], d[1], d[2]);
    // The outside-branch formula evaluated at norm exactly 1.
    const Vec3 outside = (2.0 - 1.0 / unit.norm()) * (unit / unit.norm());
    CHECK((contract(unit) - outside).norm() <= 1e-9);
  }
}

TEST_CASE("query: grid corner is exact") {
  FeatureField field = make_field(10);
  const int level = 2;
  const uint32_t n = field.resolution(level);
  // A corner near the grid center maps back inside the unit ball.
  const Vec3 u((n / 2) / double(n), (n / 2 + 1) / double(n), (n / 2 - 1) / double(n));
  const Vec3 x = u * 4.0 - Vec3::Constant(2.0);
  REQUIRE(x.norm() <= 1.0);  // stays on the identity branch of contract
  FeatureField::Corner corners[8];
  field.corners_at(x, level, corners);
  double max_w = 0.0;
  uint32_t slot = 0;
  for (const auto& c : corners) {
    if (c.weight > max_w) {
      max_w = c.weight;
      slot = c.slot;
    }
  }
  CHECK(max_w == doctest::Approx(1.0).epsilon(1e-12));
  const Feat q = field.query(x);
  const int f = field.config().features_per_level;
  for (int i = 0; i < f; ++i) {
    CHECK(q[level * f + i] ==
          doctest::Approx(field.tables()[level][slot * f + i]).epsilon(1e-12));
  }
}

TEST_CASE("query: constant level interpolates to the constant") {
  FeatureField field = make_field(11);
  const int level = 4;
  for (float& v : field.tables()[level]) v = 0.625f;
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Feat q = field.query(x);
    const int f = field.config().features_per_level;
    for (int j = 0; j < f; ++j) {
      CHECK(q[level * f + j] == doctest::Approx(0.625).epsilon(1e-12));
    }
  }
}

TEST_CASE("query matches the 8-corner enumeration oracle") {
  FeatureField field = make_field(12);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Feat got = field.query(x);
    const Feat want = testers::field_query_oracle(field, x);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("interpolation weights sum to one per level") {
  FeatureField field = make_field(13);
  Rng rng(7);
  FeatureField::Corner corners[8];
  for (int i = 0; i < 50; ++i) {
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    for (int l = 0; l < field.levels(); ++l) {
      field.corners_at(x, l, corners);
      double sum = 0.0;
      for (const auto& c : corners) sum += c.weight;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("query is continuous in x") {
  FeatureField field = make_field(14);
  Rng rng(8);
  const double step = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Vec3 x(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                 rng.uniform(-1.5, 1.5));
    double dirv[3];
    rng.unit_vector3(dirv);
    const Vec3 x2 = x + step * Vec3(dirv[0], dirv[1], dirv[2]);
    const double diff = (field.query(x) - field.query(x2)).cwiseAbs().maxCoeff();
    // Lipschitz bound: finest grid resolution times the feature range.
    const double c_bound = 3.0 * field.resolution(field.levels() - 1) * 0.5 * 8.0;
    CHECK(diff <= c_bound * step);
  }
}

TEST_CASE("query_backward: zero upstream gives zero gradients") {
  FeatureField field = make_field(15);
  const auto grads = field.query_backward(Vec3(0.2, 0.1, -0.4), Feat::Zero());
  for (const auto& e : grads) {
    CHECK(e.grad.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("query_backward: corner receives the full upstream component") {
  FeatureField field = make_field(16);
  const int level = 1;
  const uint32_t n = field.resolution(level);
  const Vec3 u((n / 2) / double(n), (n / 2 - 1) / double(n), (n / 2 + 1) / double(n));
  const Vec3 x = u * 4.0 - Vec3::Constant(2.0);
  REQUIRE(x.norm() <= 1.0);
  Feat upstream = Feat::Zero();
  const int f = field.config().features_per_level;
  upstream[level * f + 0] = 1.0;
  const auto grads = field.query_backward(x, upstream);
  double total = 0.0;
  double max_entry = 0.0;
  for (const auto& e : grads) {
    if (e.level != level) {
      CHECK(e.grad.cwiseAbs().maxCoeff() == 0.0);
      continue;
    }
    total += e.grad[0];
    max_entry = std::max(max_entry, std::abs(e.grad[0]));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_entry == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("query_backward matches finite differences") {
  FeatureField field = make_field(17);
  Rng rng(9);
  Feat upstream;
  for (int i = 0; i < kFeatureDim; ++i) upstream[i] = rng.uniform(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 x(rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8),
                 rng.uniform(-1.8, 1.8));
    const auto grads = field.query_backward(x, upstream);
    int checked = 0;
    for (const auto& e : grads) {
      if (checked >= 4) break;
      for (int f = 0; f < field.config().features_per_level; ++f) {
        float& cell =
            field.tables()[e.level][static_cast<size_t>(e.slot) *
                                        field.config().features_per_level + f];
        const float saved = cell;
        const double h = 1e-4;
        cell = static_cast<float>(saved + h);
        const double up_v = upstream.dot(field.query(x));
        cell = static_cast<float>(saved - h);
        const double dn_v = upstream.dot(field.query(x));
        cell = saved;
        const double fd =
            (up_v - dn_v) / (static_cast<double>(static_cast<float>(saved + h)) -
                             static_cast<double>(static_cast<float>(saved - h)));
        if (std::abs(fd) < 1e-8 && std::abs(e.grad[f]) < 1e-8) continue;
        CHECK(testers::rel_err(e.grad[f], fd) <= 1e-3);
      }
      ++checked;
    }
  }
}

TEST_CASE("accumulate_query_backward agrees with the sparse form") {
  FeatureField field = make_field(18);
  Rng rng(10);
  Feat upstream;
  for (int i = 0; i < kFeatureDim; ++i) upstream[i] = rng.uniform(-1, 1);
  const Vec3 x(0.4, -0.9, 1.3);
  std::vector<std::vector<double>> dense(field.levels());
  for (int l = 0; l < field.levels(); ++l) {
    dense[l].assign(field.tables()[l].size(), 0.0);
  }
  field.accumulate_query_backward(x, upstream, dense);
  const auto sparse = field.query_backward(x, upstream);
  const int f = field.config().features_per_level;
  double sparse_sum = 0.0, dense_sum = 0.0;
  for (const auto& e : sparse) {
    for (int i = 0; i < f; ++i) {
      CHECK(dense[e.level][static_cast<size_t>(e.slot) * f + i] ==
            doctest::Approx(e.grad[i]).epsilon(1e-12));
      sparse_sum += e.grad[i];
    }
  }
  for (const auto& level : dense) {
    for (double v : level) dense_sum += v;
  }
  CHECK(sparse_sum == doctest::Approx(dense_sum).epsilon(1e-12));
}

TEST_CASE("sparse gradients are merged in level-then-slot order") {
  FeatureField field = make_field(19);
  const auto grads = field.query_backward(Vec3(1.9, 1.9, 1.9), Feat::Ones());
  for (size_t i = 1; i < grads.size(); ++i) {
    const bool ordered = grads[i - 1].level < grads[i].level ||
                         (grads[i - 1].level == grads[i].level &&
                          grads[i - 1].slot < grads[i].slot);
    CHECK(ordered);
  }
  CHECK(grads.size() <= static_cast<size_t>(8 * field.levels()));
}

TEST_CASE("checksum detects table changes") {
  FeatureField field = make_field(20);
  const uint64_t before = field.checksum();
  CHECK(field.checksum() == before);
  field.tables()[3][123] += 0.25f;
  CHECK(field.checksum() != before);
  field.set_frozen(true);
  CHECK(field.frozen());
}

TEST_CASE("field file round-trips bit-exactly") {
  FeatureField field = make_field(21);
  const std::string path = "/tmp/splatsr_test_field.sgsf";
  field.save(path);
  const FeatureField loaded = FeatureField::load(path);
  CHECK(loaded.checksum() == field.checksum());
  CHECK(loaded.config().levels == field.config().levels);
  CHECK(loaded.resolution(7) == field.resolution(7));
  Rng rng(22);
  for (int i = 0; i < 10; ++i) {
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK((loaded.query(x) - field.query(x)).cwiseAbs().maxCoeff() == 0.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("coarse levels use collision-free indexing") {
  FeatureField field = make_field(23);
  const int level = 0;
  const uint64_t n = field.resolution(level);
  REQUIRE((n + 1) * (n + 1) * (n + 1) <= field.config().table_size);
  std::set<uint32_t> seen;
  FeatureField::Corner corners[8];
  for (uint32_t i = 0; i + 1 < n; i += 3) {
    const Vec3 u((i + 0.5) / n, (i + 0.5) / n, (i + 0.5) / n);
    const Vec3 x = u * 4.0 - Vec3::Constant(2.0);
    field.corners_at(x, level, corners);
    for (const auto& c : corners) seen.insert(c.slot);
  }
  CHECK(seen.size() % 8 == 0);
}
