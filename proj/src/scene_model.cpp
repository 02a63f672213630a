#include "splatsr/scene_model.hpp"

#include "splatsr/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>

namespace splatsr {

void SceneDataset::validate() const {
  if (cameras.size() != lr_images.size()) {
    throw DataError("dataset: camera/image count mismatch");
  }
  for (size_t i = 0; i < cameras.size(); ++i) {
    const Camera& cam = cameras[i];
    cam.validate();
    if (lr_images[i].width != cam.width || lr_images[i].height != cam.height) {
      throw DataError("dataset: LR image does not match camera dimensions");
    }
    if (has_pseudo(static_cast<int>(i))) {
      const Image& hr = hr_pseudo[i];
      if (hr.width != cam.width * upscale_factor ||
          hr.height != cam.height * upscale_factor) {
        throw DataError("dataset: HR pseudo-label dims must be LR dims * factor");
      }
    }
    if (has_depth(static_cast<int>(i))) {
      const Image& d = hr_depth[i];
      if (d.width != cam.width * upscale_factor ||
          d.height != cam.height * upscale_factor || d.channels != 1) {
        throw DataError("dataset: HR depth dims must be LR dims * factor, 1 channel");
      }
    }
  }
}

double anchor_uncertainty(const FeatF& f_sigma) {
  double sum = 0.0;
  for (int i = 0; i < kFeatureDim; ++i) {
    const double s = std::exp(static_cast<double>(f_sigma[i]));
    sum += s * s;
  }
  return std::sqrt(sum);
}

void anchor_gaussian_means(const Anchor& a, std::vector<Vec3>& out) {
  const int k = a.k();
  out.resize(k);
  const Vec3 x = a.position.cast<double>();
  const Vec3 s = a.offset_scale.cast<double>();
  for (int i = 0; i < k; ++i) {
    const Vec3 o = a.offsets.row(i).cast<double>();
    out[i] = x + o.cwiseProduct(s);
  }
}

std::vector<NeuralGaussian> spawn_neural_gaussians(
    const Anchor& anchor, const Camera& camera, const Feat& f_field,
    const Feat& f_supp, const DecoderSet& decoders, DecodeCache* cache,
    bool* degenerate_view_dir) {
  const Vec3 x = anchor.position.cast<double>();
  const Vec3 to_anchor = x - camera.center();
  const double delta_vc = to_anchor.norm();
  Vec3 d_vc;
  if (delta_vc == 0.0) {
    d_vc = Vec3(0, 0, 1);
    if (degenerate_view_dir) *degenerate_view_dir = true;
  } else {
    d_vc = to_anchor / delta_vc;
  }

  const Vec3 s = anchor.offset_scale.cast<double>();
  const DecodedAttributes attrs = decode_attributes(
      decoders, f_field, f_supp, delta_vc, d_vc, s, cache);

  const double u = anchor_uncertainty(anchor.f_sigma);
  const int k = anchor.k();
  std::vector<NeuralGaussian> out(k);
  for (int i = 0; i < k; ++i) {
    NeuralGaussian& g = out[i];
    g.mean = x + anchor.offsets.row(i).cast<double>().transpose().cwiseProduct(s);
    g.rotation = attrs.rotation[i];
    g.scale = attrs.scale[i];
    g.opacity = attrs.opacity[i];
    g.color = attrs.color[i];
    g.uncertainty = u;
  }
  return out;
}

std::vector<Anchor> init_anchors(const std::vector<Vec3>& points, double eps0,
                                 int k, float sigma_init, Rng& rng) {
  if (points.empty()) throw DataError("no initialization points");
  if (!(eps0 > 0.0)) throw DataError("voxel size must be positive");

  std::map<std::tuple<int64_t, int64_t, int64_t>, bool> occupied;
  for (const Vec3& p : points) {
    occupied[{static_cast<int64_t>(std::floor(p.x() / eps0)),
              static_cast<int64_t>(std::floor(p.y() / eps0)),
              static_cast<int64_t>(std::floor(p.z() / eps0))}] = true;
  }
  std::vector<Anchor> anchors;
  anchors.reserve(occupied.size());
  const float log_sigma = std::log(sigma_init);
  for (const auto& [key, _] : occupied) {
    Anchor a;
    a.position = Vec3f(static_cast<float>((std::get<0>(key) + 0.5) * eps0),
                       static_cast<float>((std::get<1>(key) + 0.5) * eps0),
                       static_cast<float>((std::get<2>(key) + 0.5) * eps0));
    a.level = 0;
    a.offset_scale = Vec3f::Constant(static_cast<float>(eps0));
    a.offsets.resize(k, 3);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < 3; ++j) {
        a.offsets(i, j) = static_cast<float>(rng.uniform(-0.5, 0.5));
      }
    }
    a.f_mu = FeatF::Zero();
    a.f_sigma = FeatF::Constant(log_sigma);
    a.origin = AnchorOrigin::kInit;
    anchors.push_back(std::move(a));
  }
  return anchors;
}

size_t prune_anchors(std::vector<Anchor>& anchors, double opacity_threshold,
                     const std::vector<uint8_t>& seen,
                     std::vector<int>* removed_indices) {
  std::vector<Anchor> kept;
  kept.reserve(anchors.size());
  size_t removed = 0;
  for (size_t i = 0; i < anchors.size(); ++i) {
    const bool observed = i < seen.size() && seen[i];
    if (observed && anchors[i].opacity_accum < opacity_threshold) {
      ++removed;
      if (removed_indices) removed_indices->push_back(static_cast<int>(i));
    } else {
      kept.push_back(std::move(anchors[i]));
    }
  }
  anchors = std::move(kept);
  return removed;
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

std::vector<uint8_t> serialize_anchors(const std::vector<Anchor>& anchors, int k) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'G', 'S', 'A'});
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(anchors.size()));
  put_u32(out, static_cast<uint32_t>(k));
  for (const Anchor& a : anchors) {
    if (a.k() != k) throw DataError("anchor offset count differs from k");
    for (int i = 0; i < 3; ++i) put_f32(out, a.position[i]);
    put_f32(out, static_cast<float>(a.level));
    for (int i = 0; i < 3; ++i) put_f32(out, a.offset_scale[i]);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < 3; ++j) put_f32(out, a.offsets(i, j));
    }
    for (int i = 0; i < kFeatureDim; ++i) put_f32(out, a.f_mu[i]);
    for (int i = 0; i < kFeatureDim; ++i) put_f32(out, a.f_sigma[i]);
    put_f32(out, a.opacity_accum);
    put_f32(out, static_cast<float>(static_cast<int32_t>(a.origin)));
  }
  return out;
}

std::vector<Anchor> deserialize_anchors(const uint8_t* bytes, size_t n) {
  if (n < 16 || std::memcmp(bytes, "SGSA", 4) != 0) {
    throw DataError("not an SGSA anchor blob");
  }
  if (get_u32(bytes + 4) != 1) throw DataError("unsupported SGSA version");
  const uint32_t count = get_u32(bytes + 8);
  const uint32_t k = get_u32(bytes + 12);
  const size_t per_anchor = (3 + 1 + 3 + 3 * k + 16 + 16 + 1 + 1) * 4;
  if (n - 16 < per_anchor * count) throw DataError("truncated SGSA blob");
  std::vector<Anchor> anchors(count);
  size_t pos = 16;
  auto next = [&]() {
    const float f = get_f32(bytes + pos);
    pos += 4;
    return f;
  };
  for (Anchor& a : anchors) {
    for (int i = 0; i < 3; ++i) a.position[i] = next();
    a.level = static_cast<int32_t>(next());
    for (int i = 0; i < 3; ++i) a.offset_scale[i] = next();
    a.offsets.resize(k, 3);
    for (uint32_t i = 0; i < k; ++i) {
      for (int j = 0; j < 3; ++j) a.offsets(i, j) = next();
    }
    for (int i = 0; i < kFeatureDim; ++i) a.f_mu[i] = next();
    for (int i = 0; i < kFeatureDim; ++i) a.f_sigma[i] = next();
    a.opacity_accum = next();
    a.origin = static_cast<AnchorOrigin>(static_cast<int32_t>(next()));
  }
  return anchors;
}

void save_anchors(const std::vector<Anchor>& anchors, int k, const std::string& path) {
  atomic_write_file(path, serialize_anchors(anchors, k));
}

std::vector<Anchor> load_anchors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open anchor file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_anchors(bytes.data(), bytes.size());
}

}  // namespace splatsr
