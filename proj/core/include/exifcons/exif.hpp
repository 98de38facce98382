#pragma once

// JPEG/APP1/TIFF-IFD metadata reader, plus the small writer used to build
// test fixtures. Only IFD0, the Exif sub-IFD, the GPS sub-IFD and the
// Interoperability sub-IFD are decoded; MakerNote payloads are skipped.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace exifcons::exif {

enum class Ifd { kImage, kExif, kGps, kInterop };

/// Group prefix of the canonical attribute namespace ("Image", "EXIF", ...).
std::string_view group_name(Ifd ifd);

/// "<Group> <TagName>", or "<Group> Tag0xNNNN" for unknown tags.
std::string canonical_name(Ifd ifd, std::uint16_t tag);

/// Inverse of canonical_name for known tags.
std::optional<std::pair<Ifd, std::uint16_t>> lookup_tag(std::string_view name);

/// The 80 attribute names of the reference attribute table, in table order.
const std::vector<std::string>& reference_attributes();

enum class TiffType : std::uint16_t {
  kByte = 1,
  kAscii = 2,
  kShort = 3,
  kLong = 4,
  kRational = 5,
  kSByte = 6,
  kUndefined = 7,
  kSShort = 8,
  kSLong = 9,
  kSRational = 10,
  kFloat = 11,
  kDouble = 12,
};

using AttributeMap = std::map<std::string, std::string>;

/// Canonical string for a raw tag payload: trailing NULs dropped, then
/// either trimmed text (valid UTF-8 without control bytes) or "hex:" plus
/// lowercase hex of the bytes. No case folding. A leading 8-byte character
/// code on EXIF UserComment ("ASCII\0\0\0" or all-NUL) is removed first.
std::string normalize_value(std::string_view attribute,
                            std::span<const std::uint8_t> raw);

/// Result of walking the JPEG marker segments up to the first scan.
struct JpegInfo {
  int width = 0;
  int height = 0;
  /// Quantization tables by destination id, zigzag order as stored.
  std::array<std::optional<std::array<std::uint16_t, 64>>, 4> quant_tables;
  /// TIFF payload of the first APP1 "Exif\0\0" segment, if any.
  std::optional<std::vector<std::uint8_t>> tiff;
  /// Absolute file offset of the TIFF header.
  std::uint64_t tiff_offset = 0;
};

bool is_jpeg(std::span<const std::uint8_t> bytes);

/// Throws UnsupportedFormatError for non-JPEG data and ParseError for
/// truncated or malformed segments.
JpegInfo scan_jpeg(std::span<const std::uint8_t> bytes);

/// Decodes every supported IFD. `base_offset` is only used for error
/// messages. First occurrence of a tag wins; empty values are dropped.
AttributeMap parse_tiff(std::span<const std::uint8_t> tiff,
                        std::uint64_t base_offset = 0);

/// Convenience: scan_jpeg + parse_tiff. Absent APP1 yields an empty map.
AttributeMap read_jpeg_attributes(std::span<const std::uint8_t> jpeg);

/// IJG quality whose scaled standard luminance table is closest to table 0
/// (exact match when the file was written by libjpeg). Returns nullopt when
/// the file has no table 0.
std::optional<int> estimate_jpeg_quality(const JpegInfo& info);

/// Standard IJG luminance table scaled for `quality`, zigzag order.
std::array<std::uint16_t, 64> scaled_luminance_table(int quality);

// ---- fixture writer -------------------------------------------------------

struct Entry {
  Ifd ifd = Ifd::kImage;
  std::uint16_t tag = 0;
  TiffType type = TiffType::kAscii;
  std::uint32_t count = 0;
  /// Value bytes in little-endian order; swapped when writing big-endian.
  std::vector<std::uint8_t> data;

  static Entry ascii(Ifd ifd, std::uint16_t tag, std::string_view text);
  static Entry undefined(Ifd ifd, std::uint16_t tag,
                         std::span<const std::uint8_t> bytes);
  static Entry shorts(Ifd ifd, std::uint16_t tag,
                      std::span<const std::uint16_t> values);
  static Entry longs(Ifd ifd, std::uint16_t tag,
                     std::span<const std::uint32_t> values);
  static Entry rational(Ifd ifd, std::uint16_t tag, std::uint32_t num,
                        std::uint32_t den);
};

/// Serializes entries into a TIFF structure. Sub-IFD pointer tags are added
/// automatically for any non-empty sub-IFD.
std::vector<std::uint8_t> build_tiff(std::vector<Entry> entries,
                                     bool big_endian = false);

/// Inserts an APP1/Exif segment directly after SOI.
std::vector<std::uint8_t> insert_app1(std::span<const std::uint8_t> jpeg,
                                      std::span<const std::uint8_t> tiff);

}  // namespace exifcons::exif
