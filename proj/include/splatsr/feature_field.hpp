#pragma once

#include "splatsr/common.hpp"
#include "splatsr/rng.hpp"

#include <string>
#include <vector>

namespace splatsr {

// Maps unbounded coordinates into the radius-2 ball: identity inside the unit
// ball, 2 - 1/||x|| radially outside.
Vec3 contract(const Vec3& x);

struct FeatureFieldConfig {
  int levels = 8;
  int features_per_level = 2;
  uint32_t table_size = 1u << 14;
  int base_resolution = 16;
  double per_level_scale = 1.45;
  float init_scale = 1e-4f;
};

// Sparse gradient of one query: one entry per touched (level, slot).
struct FieldGradEntry {
  int level;
  uint32_t slot;
  Eigen::VectorXd grad;  // features_per_level components
};

// Multi-resolution hash grid of latent features over contracted space.
// Levels whose full grid fits in the table use direct collision-free
// indexing; finer levels use the usual xor-of-primes spatial hash.
class FeatureField {
 public:
  FeatureField() = default;
  explicit FeatureField(const FeatureFieldConfig& cfg);

  void init_tables(Rng& rng);

  const FeatureFieldConfig& config() const { return cfg_; }
  int levels() const { return cfg_.levels; }
  uint32_t resolution(int level) const { return resolutions_[level]; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  std::vector<std::vector<float>>& tables() { return tables_; }
  const std::vector<std::vector<float>>& tables() const { return tables_; }

  // 16-dim latent feature at world position x (level-major concatenation).
  Feat query(const Vec3& x) const;

  // Gradients of query w.r.t. the touched table entries, merged and sorted
  // in level-then-slot order. At most 8 per level before merging.
  std::vector<FieldGradEntry> query_backward(const Vec3& x, const Feat& upstream) const;

  // Scatters upstream into a dense per-level gradient buffer (same layout as
  // tables). Used by the trainer to avoid sparse bookkeeping.
  void accumulate_query_backward(const Vec3& x, const Feat& upstream,
                                 std::vector<std::vector<double>>& table_grads) const;

  uint64_t checksum() const;

  // "SGSF": magic, u32 version, u32 L, u32 F, u32 T, f32 N1, f32 b, then
  // tables level-major as little-endian f32.
  void save(const std::string& path) const;
  static FeatureField load(const std::string& path);
  std::vector<uint8_t> serialize() const;
  static FeatureField deserialize(const uint8_t* bytes, size_t n);

  struct Corner {
    uint32_t slot;
    double weight;
  };
  // The 8 interpolation corners of one level at world position x.
  void corners_at(const Vec3& x, int level, Corner out[8]) const;

 private:
  uint32_t slot_index(int level, int64_t i, int64_t j, int64_t k) const;

  FeatureFieldConfig cfg_;
  std::vector<uint32_t> resolutions_;
  std::vector<bool> direct_;
  std::vector<std::vector<float>> tables_;
  bool frozen_ = false;
};

}  // namespace splatsr
