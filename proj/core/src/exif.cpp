#include "exifcons/exif.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <set>
#include <unordered_map>

#include "exifcons/errors.hpp"

namespace exifcons::exif {

namespace {

struct TagDef {
  Ifd ifd;
  std::uint16_t tag;
  const char* name;
};

// Tag names follow the exiv2/exifread naming used for the canonical namespace.
constexpr TagDef kTags[] = {
    // IFD0
    {Ifd::kImage, 0x00FE, "NewSubfileType"},
    {Ifd::kImage, 0x0100, "ImageWidth"},
    {Ifd::kImage, 0x0101, "ImageLength"},
    {Ifd::kImage, 0x0102, "BitsPerSample"},
    {Ifd::kImage, 0x0103, "Compression"},
    {Ifd::kImage, 0x0106, "PhotometricInterpretation"},
    {Ifd::kImage, 0x010E, "ImageDescription"},
    {Ifd::kImage, 0x010F, "Make"},
    {Ifd::kImage, 0x0110, "Model"},
    {Ifd::kImage, 0x0111, "StripOffsets"},
    {Ifd::kImage, 0x0112, "Orientation"},
    {Ifd::kImage, 0x0115, "SamplesPerPixel"},
    {Ifd::kImage, 0x0116, "RowsPerStrip"},
    {Ifd::kImage, 0x0117, "StripByteCounts"},
    {Ifd::kImage, 0x011A, "XResolution"},
    {Ifd::kImage, 0x011B, "YResolution"},
    {Ifd::kImage, 0x011C, "PlanarConfiguration"},
    {Ifd::kImage, 0x0128, "ResolutionUnit"},
    {Ifd::kImage, 0x0131, "Software"},
    {Ifd::kImage, 0x0132, "DateTime"},
    {Ifd::kImage, 0x013B, "Artist"},
    {Ifd::kImage, 0x013E, "WhitePoint"},
    {Ifd::kImage, 0x013F, "PrimaryChromaticities"},
    {Ifd::kImage, 0x0211, "YCbCrCoefficients"},
    {Ifd::kImage, 0x0213, "YCbCrPositioning"},
    {Ifd::kImage, 0x0214, "ReferenceBlackWhite"},
    {Ifd::kImage, 0x02BC, "ApplicationNotes"},
    {Ifd::kImage, 0x4746, "Rating"},
    {Ifd::kImage, 0x8298, "Copyright"},
    {Ifd::kImage, 0x8769, "ExifOffset"},
    {Ifd::kImage, 0x8825, "GPSInfo"},
    {Ifd::kImage, 0x9C9B, "XPTitle"},
    {Ifd::kImage, 0x9C9C, "XPComment"},
    {Ifd::kImage, 0x9C9D, "XPAuthor"},
    {Ifd::kImage, 0x9C9E, "XPKeywords"},
    {Ifd::kImage, 0x9C9F, "XPSubject"},
    {Ifd::kImage, 0xC4A5, "PrintImageMatching"},
    // Exif sub-IFD
    {Ifd::kExif, 0x829A, "ExposureTime"},
    {Ifd::kExif, 0x829D, "FNumber"},
    {Ifd::kExif, 0x8822, "ExposureProgram"},
    {Ifd::kExif, 0x8824, "SpectralSensitivity"},
    {Ifd::kExif, 0x8827, "ISOSpeedRatings"},
    {Ifd::kExif, 0x8828, "OECF"},
    {Ifd::kExif, 0x8830, "SensitivityType"},
    {Ifd::kExif, 0x8831, "StandardOutputSensitivity"},
    {Ifd::kExif, 0x8832, "RecommendedExposureIndex"},
    {Ifd::kExif, 0x9000, "ExifVersion"},
    {Ifd::kExif, 0x9003, "DateTimeOriginal"},
    {Ifd::kExif, 0x9004, "DateTimeDigitized"},
    {Ifd::kExif, 0x9010, "OffsetTime"},
    {Ifd::kExif, 0x9011, "OffsetTimeOriginal"},
    {Ifd::kExif, 0x9012, "OffsetTimeDigitized"},
    {Ifd::kExif, 0x9101, "ComponentsConfiguration"},
    {Ifd::kExif, 0x9102, "CompressedBitsPerPixel"},
    {Ifd::kExif, 0x9201, "ShutterSpeedValue"},
    {Ifd::kExif, 0x9202, "ApertureValue"},
    {Ifd::kExif, 0x9203, "BrightnessValue"},
    {Ifd::kExif, 0x9204, "ExposureBiasValue"},
    {Ifd::kExif, 0x9205, "MaxApertureValue"},
    {Ifd::kExif, 0x9206, "SubjectDistance"},
    {Ifd::kExif, 0x9207, "MeteringMode"},
    {Ifd::kExif, 0x9208, "LightSource"},
    {Ifd::kExif, 0x9209, "Flash"},
    {Ifd::kExif, 0x920A, "FocalLength"},
    {Ifd::kExif, 0x9214, "SubjectArea"},
    {Ifd::kExif, 0x927C, "MakerNote"},
    {Ifd::kExif, 0x9286, "UserComment"},
    {Ifd::kExif, 0x9290, "SubSecTime"},
    {Ifd::kExif, 0x9291, "SubSecTimeOriginal"},
    {Ifd::kExif, 0x9292, "SubSecTimeDigitized"},
    {Ifd::kExif, 0xA000, "FlashPixVersion"},
    {Ifd::kExif, 0xA001, "ColorSpace"},
    {Ifd::kExif, 0xA002, "ExifImageWidth"},
    {Ifd::kExif, 0xA003, "ExifImageLength"},
    {Ifd::kExif, 0xA005, "InteroperabilityOffset"},
    {Ifd::kExif, 0xA20B, "FlashEnergy"},
    {Ifd::kExif, 0xA20E, "FocalPlaneXResolution"},
    {Ifd::kExif, 0xA20F, "FocalPlaneYResolution"},
    {Ifd::kExif, 0xA210, "FocalPlaneResolutionUnit"},
    {Ifd::kExif, 0xA214, "SubjectLocation"},
    {Ifd::kExif, 0xA215, "ExposureIndex"},
    {Ifd::kExif, 0xA217, "SensingMethod"},
    {Ifd::kExif, 0xA300, "FileSource"},
    {Ifd::kExif, 0xA301, "SceneType"},
    {Ifd::kExif, 0xA302, "CVAPattern"},
    {Ifd::kExif, 0xA401, "CustomRendered"},
    {Ifd::kExif, 0xA402, "ExposureMode"},
    {Ifd::kExif, 0xA403, "WhiteBalance"},
    {Ifd::kExif, 0xA404, "DigitalZoomRatio"},
    {Ifd::kExif, 0xA405, "FocalLengthIn35mmFilm"},
    {Ifd::kExif, 0xA406, "SceneCaptureType"},
    {Ifd::kExif, 0xA407, "GainControl"},
    {Ifd::kExif, 0xA408, "Contrast"},
    {Ifd::kExif, 0xA409, "Saturation"},
    {Ifd::kExif, 0xA40A, "Sharpness"},
    {Ifd::kExif, 0xA40B, "DeviceSettingDescription"},
    {Ifd::kExif, 0xA40C, "SubjectDistanceRange"},
    {Ifd::kExif, 0xA420, "ImageUniqueID"},
    {Ifd::kExif, 0xA430, "CameraOwnerName"},
    {Ifd::kExif, 0xA431, "BodySerialNumber"},
    {Ifd::kExif, 0xA432, "LensSpecification"},
    {Ifd::kExif, 0xA433, "LensMake"},
    {Ifd::kExif, 0xA434, "LensModel"},
    {Ifd::kExif, 0xA435, "LensSerialNumber"},
    {Ifd::kExif, 0xEA1C, "Padding"},
    {Ifd::kExif, 0xEA1D, "OffsetSchema"},
    // GPS sub-IFD
    {Ifd::kGps, 0x0000, "GPSVersionID"},
    {Ifd::kGps, 0x0001, "GPSLatitudeRef"},
    {Ifd::kGps, 0x0002, "GPSLatitude"},
    {Ifd::kGps, 0x0003, "GPSLongitudeRef"},
    {Ifd::kGps, 0x0004, "GPSLongitude"},
    {Ifd::kGps, 0x0005, "GPSAltitudeRef"},
    {Ifd::kGps, 0x0006, "GPSAltitude"},
    {Ifd::kGps, 0x0007, "GPSTimeStamp"},
    {Ifd::kGps, 0x0008, "GPSSatellites"},
    {Ifd::kGps, 0x0009, "GPSStatus"},
    {Ifd::kGps, 0x000A, "GPSMeasureMode"},
    {Ifd::kGps, 0x000B, "GPSDOP"},
    {Ifd::kGps, 0x000C, "GPSSpeedRef"},
    {Ifd::kGps, 0x000D, "GPSSpeed"},
    {Ifd::kGps, 0x000E, "GPSTrackRef"},
    {Ifd::kGps, 0x000F, "GPSTrack"},
    {Ifd::kGps, 0x0010, "GPSImgDirectionRef"},
    {Ifd::kGps, 0x0011, "GPSImgDirection"},
    {Ifd::kGps, 0x0012, "GPSMapDatum"},
    {Ifd::kGps, 0x0013, "GPSDestLatitudeRef"},
    {Ifd::kGps, 0x0014, "GPSDestLatitude"},
    {Ifd::kGps, 0x0015, "GPSDestLongitudeRef"},
    {Ifd::kGps, 0x0016, "GPSDestLongitude"},
    {Ifd::kGps, 0x0017, "GPSDestBearingRef"},
    {Ifd::kGps, 0x0018, "GPSDestBearing"},
    {Ifd::kGps, 0x0019, "GPSDestDistanceRef"},
    {Ifd::kGps, 0x001A, "GPSDestDistance"},
    {Ifd::kGps, 0x001B, "GPSProcessingMethod"},
    {Ifd::kGps, 0x001C, "GPSAreaInformation"},
    {Ifd::kGps, 0x001D, "GPSDate"},
    {Ifd::kGps, 0x001E, "GPSDifferential"},
    {Ifd::kGps, 0x001F, "GPSHPositioningError"},
    // Interoperability sub-IFD
    {Ifd::kInterop, 0x0001, "InteroperabilityIndex"},
    {Ifd::kInterop, 0x0002, "InteroperabilityVersion"},
    {Ifd::kInterop, 0x1000, "RelatedImageFileFormat"},
    {Ifd::kInterop, 0x1001, "RelatedImageWidth"},
    {Ifd::kInterop, 0x1002, "RelatedImageLength"},
};

constexpr std::uint16_t kExifPointer = 0x8769;
constexpr std::uint16_t kGpsPointer = 0x8825;
constexpr std::uint16_t kInteropPointer = 0xA005;
constexpr std::uint16_t kMakerNote = 0x927C;

// Zigzag position -> natural (row-major) index.
constexpr int kNaturalOrder[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

constexpr int kStdLuminance[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

int type_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

bool is_text_byte_sequence(std::span<const std::uint8_t> s) {
  std::size_t i = 0;
  while (i < s.size()) {
    std::uint8_t c = s[i];
    if (c < 0x80) {
      if ((c < 0x20 && c != '\t' && c != '\n' && c != '\r') || c == 0x7F) {
        return false;
      }
      ++i;
      continue;
    }
    int extra = (c & 0xE0) == 0xC0 ? 1 : (c & 0xF0) == 0xE0 ? 2
              : (c & 0xF8) == 0xF0 ? 3 : -1;
    if (extra < 0 || (c & 0xFE) == 0xC0) return false;
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return false;
    }
    i += extra + 1;
  }
  return true;
}

std::string to_hex(std::span<const std::uint8_t> s) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out = "hex:";
  for (auto b : s) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

class TiffReader {
 public:
  TiffReader(std::span<const std::uint8_t> data, std::uint64_t base)
      : data_(data), base_(base) {
    if (data_.size() < 8) fail("TIFF header truncated", 0);
    if (data_[0] == 'I' && data_[1] == 'I') {
      big_ = false;
    } else if (data_[0] == 'M' && data_[1] == 'M') {
      big_ = true;
    } else {
      fail("bad TIFF byte-order mark", 0);
    }
    if (u16(2) != 42) fail("bad TIFF magic", 2);
  }

  AttributeMap parse() {
    AttributeMap out;
    walk(Ifd::kImage, u32(4), 4, out);
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::uint64_t off) const {
    throw ParseError(what, base_ + off);
  }

  void need(std::uint64_t off, std::uint64_t len, std::uint64_t at) const {
    if (off > data_.size() || len > data_.size() - off) {
      fail("offset out of bounds", at);
    }
  }

  std::uint16_t u16(std::uint64_t off) const {
    need(off, 2, off);
    return big_ ? std::uint16_t(data_[off] << 8 | data_[off + 1])
                : std::uint16_t(data_[off + 1] << 8 | data_[off]);
  }

  std::uint32_t u32(std::uint64_t off) const {
    need(off, 4, off);
    const auto* p = data_.data() + off;
    return big_ ? (std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 |
                   std::uint32_t(p[2]) << 8 | p[3])
                : (std::uint32_t(p[3]) << 24 | std::uint32_t(p[2]) << 16 |
                   std::uint32_t(p[1]) << 8 | p[0]);
  }

  std::uint64_t u64(std::uint64_t off) const {
    std::uint64_t a = u32(off), b = u32(off + 4);
    return big_ ? (a << 32 | b) : (b << 32 | a);
  }

  std::string render(std::string_view name, std::uint16_t type,
                     std::uint32_t count, std::uint64_t off) const {
    auto bytes = data_.subspan(off, std::size_t(count) * type_size(type));
    if (type == 2 || type == 7) return normalize_value(name, bytes);

    std::string out;
    char buf[64];
    for (std::uint32_t i = 0; i < count; ++i) {
      if (i > 0) out += ", ";
      switch (type) {
        case 1: out += std::to_string(data_[off + i]); break;
        case 6: out += std::to_string(std::int8_t(data_[off + i])); break;
        case 3: out += std::to_string(u16(off + 2ull * i)); break;
        case 8: out += std::to_string(std::int16_t(u16(off + 2ull * i))); break;
        case 4: out += std::to_string(u32(off + 4ull * i)); break;
        case 9: out += std::to_string(std::int32_t(u32(off + 4ull * i))); break;
        case 5: case 10: {
          std::int64_t num, den;
          if (type == 5) {
            num = u32(off + 8ull * i);
            den = u32(off + 8ull * i + 4);
          } else {
            num = std::int32_t(u32(off + 8ull * i));
            den = std::int32_t(u32(off + 8ull * i + 4));
          }
          if (den != 0) {
            auto g = std::gcd(num, den);
            if (g != 0) { num /= g; den /= g; }
            if (den < 0) { num = -num; den = -den; }
          }
          out += den == 1 ? std::to_string(num)
                          : std::to_string(num) + "/" + std::to_string(den);
          break;
        }
        case 11: {
          std::uint32_t bits = u32(off + 4ull * i);
          float f;
          std::memcpy(&f, &bits, 4);
          std::snprintf(buf, sizeof(buf), "%.9g", double(f));
          out += buf;
          break;
        }
        case 12: {
          std::uint64_t bits = u64(off + 8ull * i);
          double d;
          std::memcpy(&d, &bits, 8);
          std::snprintf(buf, sizeof(buf), "%.17g", d);
          out += buf;
          break;
        }
        default: break;
      }
    }
    return count > 1 ? "[" + out + "]" : out;
  }

  void walk(Ifd ifd, std::uint32_t ifd_off, std::uint64_t ref_at,
            AttributeMap& out) {
    if (!visited_.insert(ifd_off).second) fail("IFD cycle", ref_at);
    if (ifd_off < 8 || std::uint64_t(ifd_off) + 2 > data_.size()) {
      fail("IFD offset out of bounds", ref_at);
    }
    std::uint16_t n = u16(ifd_off);
    if (std::uint64_t(ifd_off) + 2 + 12ull * n > data_.size()) {
      fail("IFD entry table exceeds segment", ifd_off);
    }
    std::vector<std::pair<Ifd, std::pair<std::uint32_t, std::uint64_t>>> children;
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::uint64_t e = ifd_off + 2ull + 12ull * i;
      const std::uint16_t tag = u16(e);
      const std::uint16_t type = u16(e + 2);
      const std::uint32_t count = u32(e + 4);
      const int size = type_size(type);
      if (size == 0 || count == 0) continue;  // unknown types are ignored
      if (ifd == Ifd::kExif && tag == kMakerNote) continue;
      const std::uint64_t total = std::uint64_t(count) * size;
      std::uint64_t value_off = e + 8;
      if (total > 4) {
        value_off = u32(e + 8);
        if (value_off > data_.size() || total > data_.size() - value_off) {
          char msg[96];
          std::snprintf(msg, sizeof(msg),
                        "value of tag 0x%04X lies outside the TIFF segment", tag);
          fail(msg, e + 8);
        }
      }
      const std::string name = canonical_name(ifd, tag);
      std::string value = render(name, type, count, value_off);
      if (!value.empty()) out.emplace(name, std::move(value));

      const bool is_pointer = (type == 4 || type == 13) && count == 1;
      if (is_pointer && ifd == Ifd::kImage && tag == kExifPointer) {
        children.push_back({Ifd::kExif, {u32(e + 8), e + 8}});
      } else if (is_pointer && ifd == Ifd::kImage && tag == kGpsPointer) {
        children.push_back({Ifd::kGps, {u32(e + 8), e + 8}});
      } else if (is_pointer && ifd == Ifd::kExif && tag == kInteropPointer) {
        children.push_back({Ifd::kInterop, {u32(e + 8), e + 8}});
      }
    }
    for (const auto& [child, where] : children) {
      walk(child, where.first, where.second, out);
    }
  }

  std::span<const std::uint8_t> data_;
  std::uint64_t base_;
  bool big_ = false;
  std::set<std::uint32_t> visited_;
};

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t off) {
  return std::uint16_t(b[off] << 8 | b[off + 1]);
}

bool is_sof(std::uint8_t m) {
  return m >= 0xC0 && m <= 0xCF && m != 0xC4 && m != 0xC8 && m != 0xCC;
}

}  // namespace

std::string_view group_name(Ifd ifd) {
  switch (ifd) {
    case Ifd::kImage: return "Image";
    case Ifd::kExif: return "EXIF";
    case Ifd::kGps: return "GPS";
    case Ifd::kInterop: return "Inter";
  }
  return "Image";
}

std::string canonical_name(Ifd ifd, std::uint16_t tag) {
  for (const auto& def : kTags) {
    if (def.ifd == ifd && def.tag == tag) {
      return std::string(group_name(ifd)) + " " + def.name;
    }
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "Tag0x%04X", tag);
  return std::string(group_name(ifd)) + " " + buf;
}

std::optional<std::pair<Ifd, std::uint16_t>> lookup_tag(std::string_view name) {
  for (const auto& def : kTags) {
    auto group = group_name(def.ifd);
    if (name.size() == group.size() + 1 + std::strlen(def.name) &&
        name.substr(0, group.size()) == group && name[group.size()] == ' ' &&
        name.substr(group.size() + 1) == def.name) {
      return std::pair{def.ifd, def.tag};
    }
  }
  return std::nullopt;
}

const std::vector<std::string>& reference_attributes() {
  static const std::vector<std::string> kNames = {
      "EXIF BrightnessValue", "EXIF ColorSpace", "EXIF ComponentsConfiguration",
      "EXIF CompressedBitsPerPixel", "EXIF Contrast", "EXIF CustomRendered",
      "EXIF DateTimeDigitized", "EXIF DateTimeOriginal", "EXIF DigitalZoomRatio",
      "EXIF ExifImageLength", "EXIF ExifImageWidth", "EXIF ExifVersion",
      "EXIF ExposureBiasValue", "EXIF ExposureMode", "EXIF ExposureProgram",
      "EXIF ExposureTime", "EXIF FileSource", "EXIF Flash",
      "EXIF FlashPixVersion", "EXIF FNumber", "EXIF FocalLength",
      "EXIF FocalLengthIn35mmFilm", "EXIF FocalPlaneResolutionUnit",
      "EXIF FocalPlaneXResolution", "EXIF FocalPlaneYResolution",
      "EXIF GainControl", "EXIF InteroperabilityOffset", "EXIF ISOSpeedRatings",
      "EXIF LensMake", "EXIF LensModel", "EXIF LensSpecification",
      "EXIF LightSource", "EXIF MaxApertureValue", "EXIF MeteringMode",
      "EXIF OffsetSchema", "EXIF Saturation", "EXIF SceneCaptureType",
      "EXIF SceneType", "EXIF SensingMethod", "EXIF SensitivityType",
      "EXIF Sharpness", "EXIF ShutterSpeedValue", "EXIF SubjectArea",
      "EXIF SubjectDistanceRange", "EXIF SubSecTime", "EXIF SubSecTimeDigitized",
      "EXIF SubSecTimeOriginal", "EXIF UserComment", "EXIF WhiteBalance",
      "GPS GPSAltitude", "GPS GPSAltitudeRef", "GPS GPSDate",
      "GPS GPSImgDirection", "GPS GPSImgDirectionRef", "GPS GPSLatitude",
      "GPS GPSLatitudeRef", "GPS GPSLongitude", "GPS GPSLongitudeRef",
      "GPS GPSTimeStamp", "GPS GPSVersionID", "Image Artist", "Image Copyright",
      "Image ExifOffset", "Image GPSInfo", "Image ImageDescription", "Image Make",
      "Image Model", "Image Orientation", "Image PrintImageMatching",
      "Image ResolutionUnit", "Image Software", "Image XResolution",
      "Image YCbCrPositioning", "Image YResolution",
      "Inter InteroperabilityIndex", "Inter InteroperabilityVersion",
      "Inter RelatedImageLength", "Inter RelatedImageWidth"};
  return kNames;
}

std::string normalize_value(std::string_view attribute,
                            std::span<const std::uint8_t> raw) {
  if (attribute == "EXIF UserComment" && raw.size() >= 8) {
    static constexpr std::uint8_t kAscii[8] = {'A', 'S', 'C', 'I', 'I', 0, 0, 0};
    static constexpr std::uint8_t kUndefinedCode[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    if (std::equal(raw.begin(), raw.begin() + 8, kAscii) ||
        std::equal(raw.begin(), raw.begin() + 8, kUndefinedCode)) {
      raw = raw.subspan(8);
    }
  }
  while (!raw.empty() && raw.back() == 0) raw = raw.first(raw.size() - 1);
  if (!is_text_byte_sequence(raw)) return to_hex(raw);

  auto is_space = [](std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == 0;
  };
  std::size_t b = 0, e = raw.size();
  while (b < e && is_space(raw[b])) ++b;
  while (e > b && is_space(raw[e - 1])) --e;
  return std::string(reinterpret_cast<const char*>(raw.data()) + b, e - b);
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 &&
         bytes[2] == 0xFF;
}

JpegInfo scan_jpeg(std::span<const std::uint8_t> bytes) {
  if (!is_jpeg(bytes)) throw UnsupportedFormatError("not a JPEG stream");
  JpegInfo info;
  std::size_t pos = 2;
  while (pos < bytes.size()) {
    if (bytes[pos] != 0xFF) throw ParseError("expected JPEG marker", pos);
    while (pos < bytes.size() && bytes[pos] == 0xFF) ++pos;
    if (pos >= bytes.size()) throw ParseError("truncated JPEG marker", pos);
    const std::uint8_t marker = bytes[pos++];
    if (marker == 0xD9 || marker == 0xDA) break;  // EOI or start of scan
    if ((marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) continue;
    if (pos + 2 > bytes.size()) throw ParseError("truncated segment length", pos);
    const std::size_t len = be16(bytes, pos);
    if (len < 2 || pos + len > bytes.size()) {
      throw ParseError("JPEG segment exceeds file", pos);
    }
    auto seg = bytes.subspan(pos + 2, len - 2);
    const std::size_t seg_at = pos + 2;
    if (marker == 0xE1 && !info.tiff && seg.size() >= 6 &&
        std::memcmp(seg.data(), "Exif\0\0", 6) == 0) {
      info.tiff.emplace(seg.begin() + 6, seg.end());
      info.tiff_offset = seg_at + 6;
    } else if (is_sof(marker)) {
      if (seg.size() < 5) throw ParseError("truncated SOF segment", seg_at);
      info.height = be16(seg, 1);
      info.width = be16(seg, 3);
    } else if (marker == 0xDB) {
      std::size_t q = 0;
      while (q < seg.size()) {
        const int precision = seg[q] >> 4;
        const int id = seg[q] & 0x0F;
        const std::size_t need = 1 + 64u * (precision ? 2 : 1);
        if (id > 3 || q + need > seg.size()) {
          throw ParseError("malformed DQT segment", seg_at + q);
        }
        std::array<std::uint16_t, 64> table{};
        for (int k = 0; k < 64; ++k) {
          table[k] = precision ? be16(seg, q + 1 + 2 * k) : seg[q + 1 + k];
        }
        info.quant_tables[id] = table;
        q += need;
      }
    }
    pos += len;
  }
  return info;
}

AttributeMap parse_tiff(std::span<const std::uint8_t> tiff,
                        std::uint64_t base_offset) {
  return TiffReader(tiff, base_offset).parse();
}

AttributeMap read_jpeg_attributes(std::span<const std::uint8_t> jpeg) {
  auto info = scan_jpeg(jpeg);
  if (!info.tiff) return {};
  return parse_tiff(*info.tiff, info.tiff_offset);
}

std::array<std::uint16_t, 64> scaled_luminance_table(int quality) {
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - quality * 2;
  std::array<std::uint16_t, 64> out{};
  for (int k = 0; k < 64; ++k) {
    long v = (long(kStdLuminance[kNaturalOrder[k]]) * scale + 50) / 100;
    out[k] = std::uint16_t(std::clamp(v, 1L, 255L));
  }
  return out;
}

std::optional<int> estimate_jpeg_quality(const JpegInfo& info) {
  if (!info.quant_tables[0]) return std::nullopt;
  const auto& table = *info.quant_tables[0];
  int best_q = 0;
  long best = -1;
  for (int q = 100; q >= 1; --q) {
    auto ref = scaled_luminance_table(q);
    long d = 0;
    for (int k = 0; k < 64; ++k) d += std::abs(long(table[k]) - long(ref[k]));
    if (best < 0 || d < best) {
      best = d;
      best_q = q;
    }
  }
  return best_q;
}

// ---- writer ---------------------------------------------------------------

Entry Entry::ascii(Ifd ifd, std::uint16_t tag, std::string_view text) {
  Entry e{ifd, tag, TiffType::kAscii, std::uint32_t(text.size() + 1), {}};
  e.data.assign(text.begin(), text.end());
  e.data.push_back(0);
  return e;
}

Entry Entry::undefined(Ifd ifd, std::uint16_t tag,
                       std::span<const std::uint8_t> bytes) {
  return Entry{ifd, tag, TiffType::kUndefined, std::uint32_t(bytes.size()),
               {bytes.begin(), bytes.end()}};
}

Entry Entry::shorts(Ifd ifd, std::uint16_t tag,
                    std::span<const std::uint16_t> values) {
  Entry e{ifd, tag, TiffType::kShort, std::uint32_t(values.size()), {}};
  for (auto v : values) {
    e.data.push_back(std::uint8_t(v & 0xFF));
    e.data.push_back(std::uint8_t(v >> 8));
  }
  return e;
}

Entry Entry::longs(Ifd ifd, std::uint16_t tag,
                   std::span<const std::uint32_t> values) {
  Entry e{ifd, tag, TiffType::kLong, std::uint32_t(values.size()), {}};
  for (auto v : values) {
    for (int s = 0; s < 32; s += 8) e.data.push_back(std::uint8_t(v >> s));
  }
  return e;
}

Entry Entry::rational(Ifd ifd, std::uint16_t tag, std::uint32_t num,
                      std::uint32_t den) {
  Entry e{ifd, tag, TiffType::kRational, 1, {}};
  for (auto v : {num, den}) {
    for (int s = 0; s < 32; s += 8) e.data.push_back(std::uint8_t(v >> s));
  }
  return e;
}

std::vector<std::uint8_t> build_tiff(std::vector<Entry> entries, bool big_endian) {
  auto has = [&](Ifd ifd) {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const Entry& e) { return e.ifd == ifd; });
  };
  const bool need_interop = has(Ifd::kInterop);
  const bool need_exif = has(Ifd::kExif) || need_interop;
  const bool need_gps = has(Ifd::kGps);
  const std::uint32_t zero[1] = {0};
  if (need_exif) entries.push_back(Entry::longs(Ifd::kImage, kExifPointer, zero));
  if (need_gps) entries.push_back(Entry::longs(Ifd::kImage, kGpsPointer, zero));
  if (need_interop) entries.push_back(Entry::longs(Ifd::kExif, kInteropPointer, zero));

  const Ifd order[] = {Ifd::kImage, Ifd::kExif, Ifd::kGps, Ifd::kInterop};
  std::vector<std::vector<Entry>> groups(4);
  for (auto& e : entries) groups[int(e.ifd)].push_back(std::move(e));
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(),
                     [](const Entry& a, const Entry& b) { return a.tag < b.tag; });
  }

  // Layout: header, then per IFD its entry table followed by its data area.
  std::uint32_t ifd_offset[4] = {0, 0, 0, 0};
  std::uint32_t cursor = 8;
  for (Ifd ifd : order) {
    auto& g = groups[int(ifd)];
    if (g.empty()) continue;
    ifd_offset[int(ifd)] = cursor;
    cursor += 2 + 12 * std::uint32_t(g.size()) + 4;
    for (const auto& e : g) {
      if (e.data.size() > 4) cursor += std::uint32_t((e.data.size() + 1) & ~std::size_t(1));
    }
  }

  std::vector<std::uint8_t> out(cursor, 0);
  auto put16 = [&](std::size_t at, std::uint16_t v) {
    out[at + (big_endian ? 0 : 1)] = std::uint8_t(v >> 8);
    out[at + (big_endian ? 1 : 0)] = std::uint8_t(v & 0xFF);
  };
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out[at + (big_endian ? 3 - i : i)] = std::uint8_t(v >> (8 * i));
    }
  };
  // Copies little-endian element data, swapping per element if needed.
  auto put_data = [&](std::size_t at, const Entry& e) {
    int elem = type_size(std::uint16_t(e.type));
    if (e.type == TiffType::kRational || e.type == TiffType::kSRational) elem = 4;
    for (std::size_t i = 0; i < e.data.size(); i += elem) {
      for (int b = 0; b < elem; ++b) {
        out[at + i + (big_endian ? elem - 1 - b : b)] = e.data[i + b];
      }
    }
  };

  out[0] = out[1] = big_endian ? 'M' : 'I';
  put16(2, 42);
  put32(4, 8);
  for (Ifd ifd : order) {
    auto& g = groups[int(ifd)];
    if (g.empty()) continue;
    for (auto& e : g) {
      std::uint32_t target = 0;
      if (ifd == Ifd::kImage && e.tag == kExifPointer) target = ifd_offset[int(Ifd::kExif)];
      if (ifd == Ifd::kImage && e.tag == kGpsPointer) target = ifd_offset[int(Ifd::kGps)];
      if (ifd == Ifd::kExif && e.tag == kInteropPointer) target = ifd_offset[int(Ifd::kInterop)];
      if (target != 0) {
        e.data = {std::uint8_t(target), std::uint8_t(target >> 8),
                  std::uint8_t(target >> 16), std::uint8_t(target >> 24)};
      }
    }
    std::size_t at = ifd_offset[int(ifd)];
    put16(at, std::uint16_t(g.size()));
    std::size_t data_at = at + 2 + 12 * g.size() + 4;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& e = g[i];
      const std::size_t ent = at + 2 + 12 * i;
      put16(ent, e.tag);
      put16(ent + 2, std::uint16_t(e.type));
      put32(ent + 4, e.count);
      if (e.data.size() <= 4) {
        put_data(ent + 8, e);
      } else {
        put32(ent + 8, std::uint32_t(data_at));
        put_data(data_at, e);
        data_at += (e.data.size() + 1) & ~std::size_t(1);
      }
    }
    put32(at + 2 + 12 * g.size(), 0);
  }
  return out;
}

std::vector<std::uint8_t> insert_app1(std::span<const std::uint8_t> jpeg,
                                      std::span<const std::uint8_t> tiff) {
  if (!is_jpeg(jpeg)) throw UnsupportedFormatError("not a JPEG stream");
  const std::size_t len = 2 + 6 + tiff.size();
  if (len > 0xFFFF) throw InputError("EXIF payload exceeds one APP1 segment");
  std::vector<std::uint8_t> out(jpeg.begin(), jpeg.begin() + 2);
  out.push_back(0xFF);
  out.push_back(0xE1);
  out.push_back(std::uint8_t(len >> 8));
  out.push_back(std::uint8_t(len & 0xFF));
  const char header[6] = {'E', 'x', 'i', 'f', 0, 0};
  out.insert(out.end(), header, header + 6);
  out.insert(out.end(), tiff.begin(), tiff.end());
  out.insert(out.end(), jpeg.begin() + 2, jpeg.end());
  return out;
}

}  // namespace exifcons::exif
