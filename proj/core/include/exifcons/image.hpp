#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace exifcons {

inline constexpr int kPatchSize = 128;

/// 8-bit RGB image, interleaved rows (HWC).
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(std::size_t(y) * width + x) * 3 + c];
  }
  bool empty() const { return width == 0 || height == 0; }
};

/// Single-channel real-valued map, row-major.
struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  FloatMap() = default;
  FloatMap(int w, int h, double fill = 0.0)
      : width(w), height(h), values(std::size_t(w) * h, fill) {}

  double& at(int x, int y) { return values[std::size_t(y) * width + x]; }
  double at(int x, int y) const { return values[std::size_t(y) * width + x]; }
  std::size_t size() const { return values.size(); }
};

/// Binary mask, row-major, values 0/1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(std::size_t(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return bits[std::size_t(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return bits[std::size_t(y) * width + x]; }
  std::size_t count() const;
};

/// 128x128 RGB crop in planar CHW layout, channel values in [0,1].
struct Patch {
  std::vector<float> pixels;
  std::string source_photo_id;
  int x = 0;
  int y = 0;

  static constexpr std::size_t kValues = 3ull * kPatchSize * kPatchSize;
  Patch() : pixels(kValues, 0.0f) {}
  float& at(int c, int px, int py) {
    return pixels[(std::size_t(c) * kPatchSize + py) * kPatchSize + px];
  }
  float at(int c, int px, int py) const {
    return pixels[(std::size_t(c) * kPatchSize + py) * kPatchSize + px];
  }
};

Patch crop_patch(const ImageU8& image, int x, int y);

ImageU8 load_image(const std::filesystem::path& path);
ImageU8 decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_jpeg(const ImageU8& image, int quality);
std::vector<std::uint8_t> encode_png(const ImageU8& image);
void save_image(const std::filesystem::path& path, const ImageU8& image,
                int jpeg_quality = 95);

/// Writes `map` (values clamped to [0,1]) as 16-bit grayscale PNG with
/// value = round(65535 * v).
void save_gray16_png(const std::filesystem::path& path, const FloatMap& map);
FloatMap load_gray16_png(const std::filesystem::path& path);

/// Writes a 1-bit PNG (0 = black, 1 = white).
void save_mask_png(const std::filesystem::path& path, const Mask& mask);
/// Reads any PNG; nonzero pixels are set.
Mask load_mask_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace exifcons
