#include "splatsr/camera.hpp"

#include "splatsr/image.hpp"

#include <json.hpp>

#include <fstream>

namespace splatsr {

void Camera::validate() const {
  const Mat3 gram = R.transpose() * R;
  const double ortho_err = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-6) {
    throw DataError("camera " + std::to_string(id) + ": R is not orthonormal");
  }
  if (std::abs(R.determinant() - 1.0) > 1e-6) {
    throw DataError("camera " + std::to_string(id) + ": det(R) != 1");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw DataError("camera " + std::to_string(id) + ": focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw DataError("camera " + std::to_string(id) + ": non-positive image size");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw DataError("camera " + std::to_string(id) + ": principal point outside image");
  }
}

std::vector<Camera> load_cameras_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cameras file: " + path);
  nlohmann::json doc;
  in >> doc;
  if (!doc.is_array()) throw DataError("cameras file must be a JSON array: " + path);
  std::vector<Camera> cams;
  cams.reserve(doc.size());
  for (const auto& j : doc) {
    Camera c;
    c.id = j.at("id").get<int>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const auto& r = j.at("R");
    if (r.size() != 9) throw DataError("camera R must have 9 entries");
    for (int i = 0; i < 9; ++i) c.R(i / 3, i % 3) = r[i].get<double>();
    const auto& t = j.at("t");
    if (t.size() != 3) throw DataError("camera t must have 3 entries");
    for (int i = 0; i < 3; ++i) c.t[i] = t[i].get<double>();
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void save_cameras_json(const std::vector<Camera>& cams, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& c : cams) {
    nlohmann::json j;
    j["id"] = c.id;
    j["width"] = c.width;
    j["height"] = c.height;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    std::vector<double> r(9);
    for (int i = 0; i < 9; ++i) r[i] = c.R(i / 3, i % 3);
    j["R"] = r;
    j["t"] = {c.t[0], c.t[1], c.t[2]};
    doc.push_back(j);
  }
  const std::string text = doc.dump(2) + "\n";
  atomic_write_file(path, text.data(), text.size());
}

}  // namespace splatsr
