#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splatsr {

// Row-major H x W x C raster with values nominally in [0, 1] for color data.
// Depth/uncertainty maps reuse the same container with C = 1.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Writes bytes to a temporary file in the same directory, then renames.
void atomic_write_file(const std::string& path, const void* bytes, size_t n);
void atomic_write_file(const std::string& path, const std::vector<uint8_t>& bytes);

// PPM P6. maxval <= 255 writes 1-byte samples, larger writes 2-byte
// big-endian samples. Values are clamped to [0,1] and quantized by rounding.
void save_ppm(const Image& img, const std::string& path, int maxval = 255);
Image load_ppm(const std::string& path);

// Raw float map: 16-byte header {magic "SGSM", u32 W, u32 H, u32 channels},
// then little-endian f32 row-major.
void save_sgsm(const Image& img, const std::string& path);
Image load_sgsm(const std::string& path);

bool png_supported();
void save_png(const Image& img, const std::string& path);  // throws if unsupported
Image load_png(const std::string& path);

// Dispatch on extension (.ppm/.png/.sgsm).
void save_image(const Image& img, const std::string& path);
Image load_image(const std::string& path);

// Block average over factor x factor cells; dimensions must divide exactly.
Image box_downsample(const Image& img, int factor);
// Nearest/replication upsample (exact inverse partner of box_downsample).
Image replicate_upsample(const Image& img, int factor);
// Catmull-Rom bicubic upsample, output clamped to [0,1].
Image bicubic_upsample(const Image& img, int factor);

// 10*log10(1 / MSE) over all samples; returns +inf when MSE == 0.
double psnr(const Image& a, const Image& b);

}  // namespace splatsr
