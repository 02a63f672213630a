#include "splatsr/feature_field.hpp"

#include "splatsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace splatsr {

Vec3 contract(const Vec3& x) {
  const double n = x.norm();
  if (n <= 1.0) return x;
  return (2.0 - 1.0 / n) * (x / n);
}

FeatureField::FeatureField(const FeatureFieldConfig& cfg) : cfg_(cfg) {
  if (cfg_.levels * cfg_.features_per_level != kFeatureDim) {
    throw DataError("feature field: levels * features_per_level must equal 16");
  }
  // The field file stores the growth ratio as f32; normalize up front so a
  // freshly built field and a reloaded one derive identical resolutions.
  cfg_.per_level_scale = static_cast<float>(cfg_.per_level_scale);
  resolutions_.resize(cfg_.levels);
  direct_.resize(cfg_.levels);
  for (int l = 0; l < cfg_.levels; ++l) {
    const double n = cfg_.base_resolution * std::pow(cfg_.per_level_scale, l);
    resolutions_[l] = static_cast<uint32_t>(std::floor(n));
    const uint64_t corners = static_cast<uint64_t>(resolutions_[l]) + 1;
    direct_[l] = corners * corners * corners <= cfg_.table_size;
  }
  tables_.assign(cfg_.levels,
                 std::vector<float>(static_cast<size_t>(cfg_.table_size) *
                                    cfg_.features_per_level, 0.0f));
}

void FeatureField::init_tables(Rng& rng) {
  for (auto& table : tables_) {
    for (float& v : table) {
      v = static_cast<float>(rng.uniform(-cfg_.init_scale, cfg_.init_scale));
    }
  }
}

uint32_t FeatureField::slot_index(int level, int64_t i, int64_t j, int64_t k) const {
  if (direct_[level]) {
    const uint64_t stride = static_cast<uint64_t>(resolutions_[level]) + 1;
    return static_cast<uint32_t>(static_cast<uint64_t>(i) +
                                 stride * (static_cast<uint64_t>(j) +
                                           stride * static_cast<uint64_t>(k)));
  }
  const uint32_t h = static_cast<uint32_t>(i) * 1u ^
                     static_cast<uint32_t>(j) * 2654435761u ^
                     static_cast<uint32_t>(k) * 805459861u;
  return h % cfg_.table_size;
}

void FeatureField::corners_at(const Vec3& x, int level, Corner out[8]) const {
  const Vec3 c = contract(x);
  const Vec3 u = (c + Vec3::Constant(2.0)) / 4.0;  // into [0,1]^3
  const double n = static_cast<double>(resolutions_[level]);
  double fr[3];
  int64_t base[3];
  for (int a = 0; a < 3; ++a) {
    const double p = std::clamp(u[a], 0.0, 1.0) * n;
    int64_t i0 = static_cast<int64_t>(std::floor(p));
    i0 = std::clamp<int64_t>(i0, 0, static_cast<int64_t>(n) - 1);
    base[a] = i0;
    fr[a] = p - static_cast<double>(i0);
  }
  for (int corner = 0; corner < 8; ++corner) {
    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
    double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) *
               (dz ? fr[2] : 1.0 - fr[2]);
    out[corner].slot = slot_index(level, base[0] + dx, base[1] + dy, base[2] + dz);
    out[corner].weight = w;
  }
}

Feat FeatureField::query(const Vec3& x) const {
  Feat out = Feat::Zero();
  const int f = cfg_.features_per_level;
  Corner corners[8];
  for (int l = 0; l < cfg_.levels; ++l) {
    corners_at(x, l, corners);
    const std::vector<float>& table = tables_[l];
    for (const auto& c : corners) {
      const size_t off = static_cast<size_t>(c.slot) * f;
      for (int i = 0; i < f; ++i) {
        out[l * f + i] += c.weight * static_cast<double>(table[off + i]);
      }
    }
  }
  return out;
}

std::vector<FieldGradEntry> FeatureField::query_backward(const Vec3& x,
                                                         const Feat& upstream) const {
  const int f = cfg_.features_per_level;
  std::map<std::pair<int, uint32_t>, Eigen::VectorXd> merged;
  Corner corners[8];
  for (int l = 0; l < cfg_.levels; ++l) {
    corners_at(x, l, corners);
    for (const auto& c : corners) {
      auto& g = merged[{l, c.slot}];
      if (g.size() == 0) g = Eigen::VectorXd::Zero(f);
      for (int i = 0; i < f; ++i) {
        g[i] += c.weight * upstream[l * f + i];
      }
    }
  }
  std::vector<FieldGradEntry> out;
  out.reserve(merged.size());
  for (auto& [key, grad] : merged) {
    out.push_back({key.first, key.second, std::move(grad)});
  }
  return out;
}

void FeatureField::accumulate_query_backward(
    const Vec3& x, const Feat& upstream,
    std::vector<std::vector<double>>& table_grads) const {
  const int f = cfg_.features_per_level;
  Corner corners[8];
  for (int l = 0; l < cfg_.levels; ++l) {
    corners_at(x, l, corners);
    std::vector<double>& grads = table_grads[l];
    for (const auto& c : corners) {
      const size_t off = static_cast<size_t>(c.slot) * f;
      for (int i = 0; i < f; ++i) {
        grads[off + i] += c.weight * upstream[l * f + i];
      }
    }
  }
}

uint64_t FeatureField::checksum() const {
  // FNV-1a over the raw table bytes.
  uint64_t h = 1469598103934665603ull;
  for (const auto& table : tables_) {
    const uint8_t* p = reinterpret_cast<const uint8_t*>(table.data());
    const size_t n = table.size() * sizeof(float);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}
void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(out, u);
}
uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
float get_f32(const uint8_t* p) {
  const uint32_t u = get_u32(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace

std::vector<uint8_t> FeatureField::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'G', 'S', 'F'});
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(cfg_.levels));
  put_u32(out, static_cast<uint32_t>(cfg_.features_per_level));
  put_u32(out, cfg_.table_size);
  put_f32(out, static_cast<float>(cfg_.base_resolution));
  put_f32(out, static_cast<float>(cfg_.per_level_scale));
  for (const auto& table : tables_) {
    for (float v : table) put_f32(out, v);
  }
  return out;
}

FeatureField FeatureField::deserialize(const uint8_t* bytes, size_t n) {
  if (n < 28 || std::memcmp(bytes, "SGSF", 4) != 0) {
    throw DataError("not an SGSF feature field blob");
  }
  const uint32_t version = get_u32(bytes + 4);
  if (version != 1) throw DataError("unsupported SGSF version");
  FeatureFieldConfig cfg;
  cfg.levels = static_cast<int>(get_u32(bytes + 8));
  cfg.features_per_level = static_cast<int>(get_u32(bytes + 12));
  cfg.table_size = get_u32(bytes + 16);
  cfg.base_resolution = static_cast<int>(get_f32(bytes + 20));
  cfg.per_level_scale = get_f32(bytes + 24);
  FeatureField field(cfg);
  size_t pos = 28;
  for (auto& table : field.tables_) {
    const size_t need = table.size() * 4;
    if (n - pos < need) throw DataError("truncated SGSF blob");
    for (float& v : table) {
      v = get_f32(bytes + pos);
      pos += 4;
    }
  }
  return field;
}

void FeatureField::save(const std::string& path) const {
  atomic_write_file(path, serialize());
}

FeatureField FeatureField::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open field file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes.data(), bytes.size());
}

}  // namespace splatsr
