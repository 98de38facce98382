#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exifcons/exif.hpp"

namespace exifcons {

/// One photo: where its pixels live plus its canonical attribute map.
struct PhotoRecord {
  std::string photo_id;
  std::filesystem::path path;
  int width = 0;   // 0 when unknown
  int height = 0;
  exif::AttributeMap attributes;

  const std::string* value(std::string_view attribute) const;
};

/// Parses EXIF from a JPEG and merges "<photo>.exif.json" (or the explicit
/// sidecar) on top; the sidecar wins on conflict. Non-JPEG input needs a
/// sidecar. The photo id defaults to the file name.
PhotoRecord extract_metadata(const std::filesystem::path& photo,
                             const std::optional<std::filesystem::path>& sidecar =
                                 std::nullopt);

std::filesystem::path default_sidecar_path(const std::filesystem::path& photo);
exif::AttributeMap read_sidecar(const std::filesystem::path& path);
void write_sidecar(const std::filesystem::path& path, const exif::AttributeMap& attrs);

struct ManifestEntry {
  std::string photo_id;
  std::filesystem::path path;
  std::optional<std::filesystem::path> sidecar;
};

/// JSON-lines manifest. Relative paths resolve against the manifest's folder.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries);

std::vector<PhotoRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path,
                   std::span<const PhotoRecord> records);

/// Frequency-pruned label space. Attribute order and per-attribute value
/// order are lexicographic, so label indices are stable across runs.
struct AttributeVocabulary {
  std::vector<std::string> attributes;
  std::vector<std::vector<std::string>> values;
  std::vector<std::size_t> attr_photo_counts;
  std::vector<std::vector<std::size_t>> value_counts;
  std::size_t min_attr_count = 1;
  std::size_t min_value_count = 1;

  std::size_t size() const { return attributes.size(); }
  std::optional<std::size_t> attribute_index(std::string_view name) const;
  std::optional<std::size_t> value_index(std::size_t attr, std::string_view value) const;
  bool admissible(std::size_t attr, std::string_view value) const {
    return value_index(attr, value).has_value();
  }

  /// Canonical serialization; identical vocabularies give identical bytes.
  std::string to_json() const;
  static AttributeVocabulary from_json(const std::string& text);
  /// FNV-1a 64 of to_json().
  std::uint64_t fingerprint() const;

  bool operator==(const AttributeVocabulary&) const = default;
};

/// Keeps attributes carried by more than `min_attr_count` photos and, within
/// them, values seen at least `min_value_count` times.
AttributeVocabulary build_vocabulary(std::span<const PhotoRecord> records,
                                     std::size_t min_attr_count,
                                     std::size_t min_value_count);

struct CorpusIndex {
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> by_value;
  std::map<std::string, PhotoRecord> by_photo;
  /// Photo ids in input order.
  std::vector<std::string> photo_ids;

  const PhotoRecord& record(const std::string& photo_id) const;
  const std::vector<std::string>& photos_with(const std::string& attribute,
                                              const std::string& value) const;
};

CorpusIndex index_corpus(std::span<const PhotoRecord> records,
                         const AttributeVocabulary& vocab);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace exifcons
