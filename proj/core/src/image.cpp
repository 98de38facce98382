#include "exifcons/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "exifcons/errors.hpp"

namespace exifcons {

namespace {

ImageU8 from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  if (rgb.depth() != CV_8U) {
    rgb.convertTo(rgb, CV_8U, rgb.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  ImageU8 out(rgb.cols, rgb.rows);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<std::uint8_t>(y), std::size_t(rgb.cols) * 3,
                out.rgb.begin() + std::size_t(y) * rgb.cols * 3);
  }
  return out;
}

cv::Mat to_bgr(const ImageU8& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

std::vector<std::uint8_t> encode(const cv::Mat& mat, const std::string& ext,
                                 const std::vector<int>& params) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(ext, mat, buf, params)) {
    throw Error(ErrorKind::kRuntime, "image encoding failed (" + ext + ")");
  }
  return buf;
}

}  // namespace

std::size_t Mask::count() const {
  return std::size_t(std::count_if(bits.begin(), bits.end(),
                                   [](std::uint8_t b) { return b != 0; }));
}

Patch crop_patch(const ImageU8& image, int x, int y) {
  if (x < 0 || y < 0 || x + kPatchSize > image.width ||
      y + kPatchSize > image.height) {
    throw InputError("patch origin out of bounds");
  }
  Patch p;
  p.x = x;
  p.y = y;
  constexpr float kScale = 1.0f / 255.0f;
  for (int py = 0; py < kPatchSize; ++py) {
    const std::uint8_t* row =
        image.rgb.data() + (std::size_t(y + py) * image.width + x) * 3;
    for (int px = 0; px < kPatchSize; ++px) {
      for (int c = 0; c < 3; ++c) {
        p.at(c, px, py) = float(row[px * 3 + c]) * kScale;
      }
    }
  }
  return p;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

ImageU8 decode_image(std::span<const std::uint8_t> bytes) {
  cv::Mat buf(1, int(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw UnsupportedFormatError("undecodable image data");
  return from_bgr(bgr);
}

ImageU8 load_image(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const UnsupportedFormatError&) {
    throw UnsupportedFormatError("cannot decode image " + path.string());
  }
}

std::vector<std::uint8_t> encode_jpeg(const ImageU8& image, int quality) {
  return encode(to_bgr(image), ".jpg", {cv::IMWRITE_JPEG_QUALITY, quality});
}

std::vector<std::uint8_t> encode_png(const ImageU8& image) {
  return encode(to_bgr(image), ".png", {cv::IMWRITE_PNG_COMPRESSION, 6});
}

void save_image(const std::filesystem::path& path, const ImageU8& image,
                int jpeg_quality) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".jpg" || ext == ".jpeg") {
    write_file(path, encode_jpeg(image, jpeg_quality));
  } else if (ext == ".png") {
    write_file(path, encode_png(image));
  } else {
    throw UnsupportedFormatError("unsupported output extension " + ext);
  }
}

void save_gray16_png(const std::filesystem::path& path, const FloatMap& map) {
  cv::Mat mat(map.height, map.width, CV_16U);
  for (int y = 0; y < map.height; ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < map.width; ++x) {
      double v = std::clamp(map.at(x, y), 0.0, 1.0);
      row[x] = std::uint16_t(std::lround(65535.0 * v));
    }
  }
  write_file(path, encode(mat, ".png", {cv::IMWRITE_PNG_COMPRESSION, 6}));
}

FloatMap load_gray16_png(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  cv::Mat buf(1, int(bytes.size()), CV_8U, bytes.data());
  cv::Mat mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (mat.empty() || mat.channels() != 1) {
    throw UnsupportedFormatError("not a grayscale PNG: " + path.string());
  }
  FloatMap out(mat.cols, mat.rows);
  const double scale = mat.depth() == CV_16U ? 65535.0 : 255.0;
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      double v = mat.depth() == CV_16U ? mat.at<std::uint16_t>(y, x)
                                       : mat.at<std::uint8_t>(y, x);
      out.at(x, y) = v / scale;
    }
  }
  return out;
}

void save_mask_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat mat(mask.height, mask.width, CV_8U);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      mat.at<std::uint8_t>(y, x) = mask.at(x, y) ? 255 : 0;
    }
  }
  write_file(path, encode(mat, ".png", {cv::IMWRITE_PNG_BILEVEL, 1}));
}

Mask load_mask_png(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  cv::Mat buf(1, int(bytes.size()), CV_8U, bytes.data());
  cv::Mat mat = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw UnsupportedFormatError("cannot decode mask " + path.string());
  Mask out(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      out.at(x, y) = mat.at<std::uint8_t>(y, x) != 0 ? 1 : 0;
    }
  }
  return out;
}

}  // namespace exifcons
