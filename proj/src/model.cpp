#include "splatsr/model.hpp"

#include "splatsr/image.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace splatsr {

namespace {
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f64(std::vector<uint8_t>& out, double d) {
  uint64_t u;
  std::memcpy(&u, &d, 8);
  put_u64(out, u);
}
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}
double get_f64(const uint8_t* p) {
  const uint64_t u = get_u64(p);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}
}  // namespace

std::vector<uint8_t> OptimizerStateBlob::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'G', 'S', 'O'});
  put_u32(out, 1);  // version
  put_u64(out, step_count);
  put_u32(out, static_cast<uint32_t>(groups.size()));
  for (const auto& [name, mv] : groups) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, mv.first.size());
    for (double d : mv.first) put_f64(out, d);
    for (double d : mv.second) put_f64(out, d);
  }
  return out;
}

OptimizerStateBlob OptimizerStateBlob::deserialize(const uint8_t* bytes, size_t n) {
  if (n < 20 || std::memcmp(bytes, "SGSO", 4) != 0) {
    throw DataError("not an SGSO optimizer blob");
  }
  if (get_u32(bytes + 4) != 1) throw DataError("unsupported SGSO version");
  OptimizerStateBlob blob;
  blob.step_count = get_u64(bytes + 8);
  const uint32_t n_groups = get_u32(bytes + 16);
  size_t pos = 20;
  auto need = [&](size_t want) {
    if (n - pos < want) throw DataError("truncated SGSO blob");
  };
  for (uint32_t g = 0; g < n_groups; ++g) {
    need(4);
    const uint32_t name_len = get_u32(bytes + pos);
    pos += 4;
    need(name_len + 8);
    std::string name(reinterpret_cast<const char*>(bytes + pos), name_len);
    pos += name_len;
    const uint64_t size = get_u64(bytes + pos);
    pos += 8;
    need(size * 16);
    std::vector<double> m(size), v(size);
    for (uint64_t i = 0; i < size; ++i) {
      m[i] = get_f64(bytes + pos);
      pos += 8;
    }
    for (uint64_t i = 0; i < size; ++i) {
      v[i] = get_f64(bytes + pos);
      pos += 8;
    }
    blob.groups[name] = {std::move(m), std::move(v)};
  }
  return blob;
}

void Checkpoint::save(const std::string& path) const {
  const std::vector<uint8_t> anchors_blob = serialize_anchors(model.anchors, model.k);
  const std::vector<uint8_t> field_blob = model.field.serialize();
  const std::vector<uint8_t> dec_blob = model.decoders.serialize();
  const std::vector<uint8_t> opt_blob = optimizer.serialize();

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["stage"] = stage;
  manifest["iteration"] = iteration;
  manifest["k"] = model.k;
  manifest["sigma_init"] = model.sigma_init;
  nlohmann::json sections = nlohmann::json::array();
  size_t offset = 0;
  auto add_section = [&](const char* name, const std::vector<uint8_t>& blob) {
    sections.push_back({{"name", name}, {"offset", offset}, {"size", blob.size()}});
    offset += blob.size();
  };
  add_section("SGSA", anchors_blob);
  add_section("SGSF", field_blob);
  add_section("SGSW", dec_blob);
  add_section("SGSO", opt_blob);
  manifest["sections"] = sections;
  const std::string mtext = manifest.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'G', 'S', 'C'});
  put_u32(out, 1);
  put_u32(out, static_cast<uint32_t>(mtext.size()));
  out.insert(out.end(), mtext.begin(), mtext.end());
  out.insert(out.end(), anchors_blob.begin(), anchors_blob.end());
  out.insert(out.end(), field_blob.begin(), field_blob.end());
  out.insert(out.end(), dec_blob.begin(), dec_blob.end());
  out.insert(out.end(), opt_blob.begin(), opt_blob.end());
  atomic_write_file(path, out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "SGSC", 4) != 0) {
    throw DataError("not an SGSC checkpoint: " + path);
  }
  if (get_u32(bytes.data() + 4) != 1) throw DataError("unsupported checkpoint version");
  const uint32_t mlen = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<size_t>(mlen)) {
    throw DataError("truncated checkpoint manifest");
  }
  const nlohmann::json manifest = nlohmann::json::parse(
      bytes.begin() + 12, bytes.begin() + 12 + mlen);
  const size_t base = 12 + mlen;

  Checkpoint ck;
  ck.stage = manifest.at("stage").get<std::string>();
  ck.iteration = manifest.at("iteration").get<int64_t>();
  ck.model.k = manifest.at("k").get<int>();
  ck.model.sigma_init = manifest.at("sigma_init").get<float>();
  for (const auto& sec : manifest.at("sections")) {
    const std::string name = sec.at("name").get<std::string>();
    const size_t offset = base + sec.at("offset").get<size_t>();
    const size_t size = sec.at("size").get<size_t>();
    if (offset + size > bytes.size()) throw DataError("truncated checkpoint section");
    const uint8_t* p = bytes.data() + offset;
    if (name == "SGSA") {
      ck.model.anchors = deserialize_anchors(p, size);
    } else if (name == "SGSF") {
      ck.model.field = FeatureField::deserialize(p, size);
    } else if (name == "SGSW") {
      ck.model.decoders = DecoderSet::deserialize(p, size);
    } else if (name == "SGSO") {
      ck.optimizer = OptimizerStateBlob::deserialize(p, size);
    }
  }
  return ck;
}

}  // namespace splatsr
