#include "exifcons/metadata.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "exifcons/errors.hpp"
#include "exifcons/image.hpp"

namespace exifcons {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const std::string* PhotoRecord::value(std::string_view attribute) const {
  auto it = attributes.find(std::string(attribute));
  return it == attributes.end() ? nullptr : &it->second;
}

fs::path default_sidecar_path(const fs::path& photo) {
  return fs::path(photo.string() + ".exif.json");
}

exif::AttributeMap read_sidecar(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError("sidecar " + path.string() + ": " + e.what(), e.byte);
  }
  if (!j.is_object()) throw InputError("sidecar is not a JSON object: " + path.string());
  exif::AttributeMap out;
  for (auto& [k, v] : j.items()) {
    if (!v.is_string()) {
      throw InputError("sidecar value for '" + k + "' is not a string: " + path.string());
    }
    auto s = v.get<std::string>();
    if (!s.empty()) out.emplace(k, std::move(s));
  }
  return out;
}

void write_sidecar(const fs::path& path, const exif::AttributeMap& attrs) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : attrs) j[k] = v;
  write_text(path, j.dump(2) + "\n");
}

PhotoRecord extract_metadata(const fs::path& photo,
                             const std::optional<fs::path>& sidecar) {
  PhotoRecord rec;
  rec.photo_id = photo.filename().string();
  rec.path = photo;
  const auto bytes = read_file(photo);

  fs::path side = sidecar.value_or(default_sidecar_path(photo));
  const bool have_sidecar = fs::exists(side);
  if (sidecar && !have_sidecar) throw IoError("missing sidecar " + side.string());

  if (exif::is_jpeg(bytes)) {
    auto info = exif::scan_jpeg(bytes);
    rec.width = info.width;
    rec.height = info.height;
    if (info.tiff) rec.attributes = exif::parse_tiff(*info.tiff, info.tiff_offset);
  } else if (have_sidecar) {
    auto img = decode_image(bytes);
    rec.width = img.width;
    rec.height = img.height;
  } else {
    throw UnsupportedFormatError(photo.string() +
                                 ": not a JPEG and no sidecar metadata record");
  }
  if (have_sidecar) {
    for (auto& [k, v] : read_sidecar(side)) rec.attributes[k] = v;
  }
  return rec;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  const fs::path root = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : root / q;
  };
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("path")) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": missing \"path\"");
    }
    ManifestEntry e;
    e.path = resolve(j.at("path").get<std::string>());
    e.photo_id = j.contains("photo_id") ? j.at("photo_id").get<std::string>()
                                        : e.path.filename().string();
    if (j.contains("sidecar")) e.sidecar = resolve(j.at("sidecar").get<std::string>());
    if (!seen.insert(e.photo_id).second) {
      throw InputError("duplicate photo_id '" + e.photo_id + "' in " + path.string());
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  std::ostringstream os;
  for (const auto& e : entries) {
    ordered_json j;
    j["photo_id"] = e.photo_id;
    j["path"] = e.path.string();
    if (e.sidecar) j["sidecar"] = e.sidecar->string();
    os << j.dump() << "\n";
  }
  write_text(path, os.str());
}

std::vector<PhotoRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read records " + path.string());
  std::vector<PhotoRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      PhotoRecord r;
      r.photo_id = j.at("photo_id").get<std::string>();
      r.path = j.value("path", std::string());
      r.width = j.value("width", 0);
      r.height = j.value("height", 0);
      if (j.contains("attributes")) {
        for (auto& [k, v] : j.at("attributes").items()) {
          auto s = v.get<std::string>();
          if (!s.empty()) r.attributes.emplace(k, s);
        }
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const fs::path& path, std::span<const PhotoRecord> records) {
  std::ostringstream os;
  for (const auto& r : records) {
    ordered_json j;
    j["photo_id"] = r.photo_id;
    j["path"] = r.path.string();
    j["width"] = r.width;
    j["height"] = r.height;
    ordered_json attrs = ordered_json::object();
    for (const auto& [k, v] : r.attributes) attrs[k] = v;
    j["attributes"] = std::move(attrs);
    os << j.dump() << "\n";
  }
  write_text(path, os.str());
}

std::optional<std::size_t> AttributeVocabulary::attribute_index(std::string_view name) const {
  auto it = std::lower_bound(attributes.begin(), attributes.end(), name);
  if (it == attributes.end() || *it != name) return std::nullopt;
  return std::size_t(it - attributes.begin());
}

std::optional<std::size_t> AttributeVocabulary::value_index(std::size_t attr,
                                                            std::string_view value) const {
  const auto& vs = values.at(attr);
  auto it = std::lower_bound(vs.begin(), vs.end(), value);
  if (it == vs.end() || *it != value) return std::nullopt;
  return std::size_t(it - vs.begin());
}

std::string AttributeVocabulary::to_json() const {
  ordered_json j;
  j["format"] = "exifcons-vocabulary";
  j["version"] = 1;
  j["min_attr_count"] = min_attr_count;
  j["min_value_count"] = min_value_count;
  ordered_json attrs = ordered_json::array();
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    ordered_json entry;
    entry["name"] = attributes[a];
    entry["photo_count"] = attr_photo_counts[a];
    ordered_json vals = ordered_json::array();
    for (std::size_t v = 0; v < values[a].size(); ++v) {
      ordered_json ve;
      ve["value"] = values[a][v];
      ve["count"] = value_counts[a][v];
      vals.push_back(std::move(ve));
    }
    entry["values"] = std::move(vals);
    attrs.push_back(std::move(entry));
  }
  j["attributes"] = std::move(attrs);
  return j.dump(2) + "\n";
}

AttributeVocabulary AttributeVocabulary::from_json(const std::string& text) {
  AttributeVocabulary v;
  try {
    auto j = json::parse(text);
    if (j.value("format", std::string()) != "exifcons-vocabulary") {
      throw InputError("not a vocabulary file");
    }
    v.min_attr_count = j.at("min_attr_count").get<std::size_t>();
    v.min_value_count = j.at("min_value_count").get<std::size_t>();
    for (const auto& a : j.at("attributes")) {
      v.attributes.push_back(a.at("name").get<std::string>());
      v.attr_photo_counts.push_back(a.at("photo_count").get<std::size_t>());
      v.values.emplace_back();
      v.value_counts.emplace_back();
      for (const auto& val : a.at("values")) {
        v.values.back().push_back(val.at("value").get<std::string>());
        v.value_counts.back().push_back(val.at("count").get<std::size_t>());
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed vocabulary: ") + e.what());
  }
  if (!std::is_sorted(v.attributes.begin(), v.attributes.end())) {
    throw InputError("vocabulary attributes are not in canonical order");
  }
  return v;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t AttributeVocabulary::fingerprint() const { return fnv1a64(to_json()); }

AttributeVocabulary build_vocabulary(std::span<const PhotoRecord> records,
                                     std::size_t min_attr_count,
                                     std::size_t min_value_count) {
  if (min_attr_count < 1 || min_value_count < 1) {
    throw InputError("vocabulary thresholds must be >= 1");
  }
  std::map<std::string, std::size_t> attr_counts;
  std::map<std::string, std::map<std::string, std::size_t>> val_counts;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.attributes) {
      ++attr_counts[k];
      ++val_counts[k][v];
    }
  }
  AttributeVocabulary vocab;
  vocab.min_attr_count = min_attr_count;
  vocab.min_value_count = min_value_count;
  for (const auto& [attr, n] : attr_counts) {
    if (n <= min_attr_count) continue;
    vocab.attributes.push_back(attr);
    vocab.attr_photo_counts.push_back(n);
    vocab.values.emplace_back();
    vocab.value_counts.emplace_back();
    for (const auto& [val, c] : val_counts[attr]) {
      if (c < min_value_count) continue;
      vocab.values.back().push_back(val);
      vocab.value_counts.back().push_back(c);
    }
  }
  return vocab;
}

const PhotoRecord& CorpusIndex::record(const std::string& photo_id) const {
  auto it = by_photo.find(photo_id);
  if (it == by_photo.end()) throw InputError("unknown photo id " + photo_id);
  return it->second;
}

const std::vector<std::string>& CorpusIndex::photos_with(const std::string& attribute,
                                                         const std::string& value) const {
  static const std::vector<std::string> kEmpty;
  auto it = by_value.find({attribute, value});
  return it == by_value.end() ? kEmpty : it->second;
}

CorpusIndex index_corpus(std::span<const PhotoRecord> records,
                         const AttributeVocabulary& vocab) {
  CorpusIndex index;
  for (const auto& r : records) {
    if (!index.by_photo.emplace(r.photo_id, r).second) {
      throw InputError("duplicate photo_id " + r.photo_id);
    }
    index.photo_ids.push_back(r.photo_id);
    for (std::size_t a = 0; a < vocab.size(); ++a) {
      const auto* v = r.value(vocab.attributes[a]);
      if (v && vocab.admissible(a, *v)) {
        index.by_value[{vocab.attributes[a], *v}].push_back(r.photo_id);
      }
    }
  }
  return index;
}

}  // namespace exifcons
