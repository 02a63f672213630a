#include "splatsr/image.hpp"

#include "splatsr/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#ifdef SPLATSR_HAVE_PNG
#include <png.h>
#endif

namespace splatsr {

namespace {

uint8_t clamp_u8(double v) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<uint8_t>(q);
}

void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  const auto n = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in) throw DataError("short read: " + path);
  return bytes;
}

std::string lower_ext(const std::string& path) {
  auto pos = path.find_last_of('.');
  if (pos == std::string::npos) return "";
  std::string ext = path.substr(pos + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext;
}

}  // namespace

void atomic_write_file(const std::string& path, const void* bytes, size_t n) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path());
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void atomic_write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  atomic_write_file(path, bytes.data(), bytes.size());
}

void save_ppm(const Image& img, const std::string& path, int maxval) {
  if (img.channels != 3) throw DataError("PPM writer expects 3 channels");
  if (maxval < 1 || maxval > 65535) throw DataError("PPM maxval out of range");
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.size() * (maxval > 255 ? 2 : 1));
  for (double v : img.data) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * maxval);
    if (maxval > 255) {
      bytes.push_back(static_cast<uint8_t>((q >> 8) & 0xff));
      bytes.push_back(static_cast<uint8_t>(q & 0xff));
    } else {
      bytes.push_back(static_cast<uint8_t>(q));
    }
  }
  atomic_write_file(path, bytes);
}

Image load_ppm(const std::string& path) {
  const auto bytes = read_file(path);
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  if (next_token() != "P6") throw DataError("not a P6 PPM: " + path);
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  ++pos;  // single whitespace after maxval
  const int bps = maxval > 255 ? 2 : 1;
  const size_t need = static_cast<size_t>(w) * h * 3 * bps;
  if (bytes.size() - pos < need) throw DataError("truncated PPM: " + path);
  Image img(w, h, 3);
  for (size_t i = 0; i < static_cast<size_t>(w) * h * 3; ++i) {
    uint32_t q;
    if (bps == 2) {
      q = (static_cast<uint32_t>(bytes[pos]) << 8) | bytes[pos + 1];
      pos += 2;
    } else {
      q = bytes[pos++];
    }
    img.data[i] = static_cast<double>(q) / maxval;
  }
  return img;
}

void save_sgsm(const Image& img, const std::string& path) {
  std::vector<uint8_t> bytes;
  bytes.reserve(16 + img.size() * 4);
  bytes.insert(bytes.end(), {'S', 'G', 'S', 'M'});
  put_u32_le(bytes, static_cast<uint32_t>(img.width));
  put_u32_le(bytes, static_cast<uint32_t>(img.height));
  put_u32_le(bytes, static_cast<uint32_t>(img.channels));
  for (double v : img.data) {
    const float f = static_cast<float>(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32_le(bytes, u);
  }
  atomic_write_file(path, bytes);
}

Image load_sgsm(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "SGSM", 4) != 0) {
    throw DataError("not an SGSM map: " + path);
  }
  const uint32_t w = get_u32_le(bytes.data() + 4);
  const uint32_t h = get_u32_le(bytes.data() + 8);
  const uint32_t c = get_u32_le(bytes.data() + 12);
  const size_t need = 16 + static_cast<size_t>(w) * h * c * 4;
  if (bytes.size() < need) throw DataError("truncated SGSM map: " + path);
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (size_t i = 0; i < img.size(); ++i) {
    const uint32_t u = get_u32_le(bytes.data() + 16 + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    img.data[i] = f;
  }
  return img;
}

bool png_supported() {
#ifdef SPLATSR_HAVE_PNG
  return true;
#else
  return false;
#endif
}

#ifdef SPLATSR_HAVE_PNG
void save_png(const Image& img, const std::string& path) {
  if (img.channels != 3) throw DataError("PNG writer expects 3 channels");
  png_image spec;
  std::memset(&spec, 0, sizeof(spec));
  spec.version = PNG_IMAGE_VERSION;
  spec.width = static_cast<png_uint_32>(img.width);
  spec.height = static_cast<png_uint_32>(img.height);
  spec.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(img.size());
  for (size_t i = 0; i < img.size(); ++i) buf[i] = clamp_u8(img.data[i]);
  png_alloc_size_t mem_bytes = 0;
  if (!png_image_write_to_memory(&spec, nullptr, &mem_bytes, 0, buf.data(), 0, nullptr)) {
    throw DataError("PNG encode failed: " + path);
  }
  std::vector<uint8_t> out(mem_bytes);
  if (!png_image_write_to_memory(&spec, out.data(), &mem_bytes, 0, buf.data(), 0, nullptr)) {
    throw DataError("PNG encode failed: " + path);
  }
  out.resize(mem_bytes);
  atomic_write_file(path, out);
}

Image load_png(const std::string& path) {
  png_image spec;
  std::memset(&spec, 0, sizeof(spec));
  spec.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&spec, path.c_str())) {
    throw DataError("cannot read PNG: " + path);
  }
  spec.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(spec));
  if (!png_image_finish_read(&spec, nullptr, buf.data(), 0, nullptr)) {
    throw DataError("PNG decode failed: " + path);
  }
  Image img(static_cast<int>(spec.width), static_cast<int>(spec.height), 3);
  for (size_t i = 0; i < img.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}
#else
void save_png(const Image&, const std::string& path) {
  throw DataError("PNG support not built; use .ppm instead: " + path);
}
Image load_png(const std::string& path) {
  throw DataError("PNG support not built; use .ppm instead: " + path);
}
#endif

void save_image(const Image& img, const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "ppm") {
    save_ppm(img, path);
  } else if (ext == "png") {
    save_png(img, path);
  } else if (ext == "sgsm") {
    save_sgsm(img, path);
  } else {
    throw DataError("unknown image extension: " + path);
  }
}

Image load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "ppm") return load_ppm(path);
  if (ext == "png") return load_png(path);
  if (ext == "sgsm") return load_sgsm(path);
  throw DataError("unknown image extension: " + path);
}

Image box_downsample(const Image& img, int factor) {
  if (factor < 1) throw DataError("downsample factor must be >= 1");
  if (img.width % factor != 0 || img.height % factor != 0) {
    throw DataError("image dimensions not divisible by downsample factor");
  }
  Image out(img.width / factor, img.height / factor, img.channels);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            sum += img.at(x * factor + dx, y * factor + dy, c);
          }
        }
        out.at(x, y, c) = sum * inv;
      }
    }
  }
  return out;
}

Image replicate_upsample(const Image& img, int factor) {
  Image out(img.width * factor, img.height * factor, img.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(x, y, c) = img.at(x / factor, y / factor, c);
      }
    }
  }
  return out;
}

namespace {
// Catmull-Rom kernel (a = -0.5).
double cubic_weight(double t) {
  const double a = -0.5;
  const double at = std::abs(t);
  if (at <= 1.0) return (a + 2.0) * at * at * at - (a + 3.0) * at * at + 1.0;
  if (at < 2.0) return a * at * at * at - 5.0 * a * at * at + 8.0 * a * at - 4.0 * a;
  return 0.0;
}
}  // namespace

Image bicubic_upsample(const Image& img, int factor) {
  Image out(img.width * factor, img.height * factor, img.channels);
  auto sample = [&](int x, int y, int c) {
    x = std::clamp(x, 0, img.width - 1);
    y = std::clamp(y, 0, img.height - 1);
    return img.at(x, y, c);
  };
  for (int y = 0; y < out.height; ++y) {
    const double sy = (y + 0.5) / factor - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int x = 0; x < out.width; ++x) {
      const double sx = (x + 0.5) / factor - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int j = -1; j <= 2; ++j) {
          const double wy = cubic_weight(j - fy);
          for (int i = -1; i <= 2; ++i) {
            acc += wy * cubic_weight(i - fx) * sample(x0 + i, y0 + j, c);
          }
        }
        out.at(x, y, c) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DataError("psnr: shape mismatch");
  if (a.empty()) throw DataError("psnr: empty images");
  double mse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splatsr
