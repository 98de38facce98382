#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "exifcons/image.hpp"
#include "exifcons/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "exifcons-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline exifcons::ImageU8 noise_image(int w, int h, std::uint64_t seed) {
  exifcons::ImageU8 img(w, h);
  exifcons::Rng rng(seed);
  for (auto& v : img.rgb) v = std::uint8_t(exifcons::uniform_int(rng, 0, 255));
  return img;
}

inline exifcons::ImageU8 flat_image(int w, int h, std::uint8_t value) {
  exifcons::ImageU8 img(w, h);
  std::fill(img.rgb.begin(), img.rgb.end(), value);
  return img;
}

}  // namespace testutil
