#include "exifcons/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "exifcons/errors.hpp"
#include "exifcons/pair_sampler.hpp"

namespace exifcons {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSpliceStream = 40;
constexpr std::uint64_t kAuthenticStream = 41;

std::array<std::array<double, 3>, 3> matrix(std::initializer_list<double> v) {
  std::array<std::array<double, 3>, 3> m{};
  auto it = v.begin();
  for (auto& row : m) {
    for (auto& x : row) x = *it++;
  }
  return m;
}

void validate_profiles(const std::vector<CameraProfile>& profiles) {
  for (const auto& p : profiles) {
    if (p.name.empty()) throw InputError("camera profile without a name");
    if (p.jpeg_quality < 1 || p.jpeg_quality > 100) {
      throw InputError("profile " + p.name + ": jpeg_quality must be in [1, 100]");
    }
    if (!(p.noise_sigma >= 0)) throw InputError("profile " + p.name + ": negative noise_sigma");
  }
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      const auto& a = profiles[i];
      const auto& b = profiles[j];
      if (a.name == b.name) throw InputError("duplicate profile name " + a.name);
      const bool pixels_differ = a.jpeg_quality != b.jpeg_quality ||
                                 a.noise_sigma != b.noise_sigma ||
                                 a.color_matrix != b.color_matrix;
      if (!pixels_differ || a.metadata == b.metadata) {
        throw InputError("profiles " + a.name + " and " + b.name +
                         " must differ in a pixel parameter and in metadata");
      }
    }
  }
}

json profile_to_json(const CameraProfile& p) {
  json j;
  j["name"] = p.name;
  j["jpeg_quality"] = p.jpeg_quality;
  j["noise_sigma"] = p.noise_sigma;
  json m = json::array();
  for (const auto& row : p.color_matrix) m.push_back(row);
  j["color_matrix"] = m;
  j["metadata"] = json(p.metadata);
  return j;
}

CameraProfile profile_from_json(const json& j) {
  CameraProfile p;
  p.name = j.at("name").get<std::string>();
  if (j.contains("jpeg_quality")) p.jpeg_quality = j.at("jpeg_quality").get<int>();
  if (j.contains("noise_sigma")) p.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("color_matrix")) {
    const auto& m = j.at("color_matrix");
    if (m.size() != 3) throw InputError("profile " + p.name + ": color_matrix must be 3x3");
    for (std::size_t r = 0; r < 3; ++r) {
      if (m[r].size() != 3) throw InputError("profile " + p.name + ": color_matrix must be 3x3");
      for (std::size_t c = 0; c < 3; ++c) p.color_matrix[r][c] = m[r][c].get<double>();
    }
  }
  if (j.contains("metadata")) {
    for (const auto& [k, v] : j.at("metadata").items()) p.metadata[k] = v.get<std::string>();
  }
  return p;
}

}  // namespace

std::vector<CameraProfile> default_profiles() {
  std::vector<CameraProfile> out(4);
  out[0].name = "canon-5d";
  out[0].jpeg_quality = 96;
  out[0].noise_sigma = 0.004;
  out[0].color_matrix = matrix({1.08, -0.05, -0.03, -0.02, 1.02, 0.0, 0.0, -0.06, 0.96});
  out[0].metadata = {{"Image Make", "Canon"},
                     {"Image Model", "Canon EOS 5D Mark III"},
                     {"EXIF LensMake", "Canon"},
                     {"EXIF FocalLength", "24"},
                     {"EXIF Flash", "16"},
                     {"EXIF WhiteBalance", "0"}};

  out[1].name = "nikon-d7000";
  out[1].jpeg_quality = 72;
  out[1].noise_sigma = 0.022;
  out[1].color_matrix = matrix({0.94, 0.04, 0.02, 0.03, 0.97, 0.0, 0.02, 0.05, 1.05});
  out[1].metadata = {{"Image Make", "NIKON CORPORATION"},
                     {"Image Model", "NIKON D7000"},
                     {"EXIF FocalLength", "35"},
                     {"EXIF Flash", "16"},
                     {"EXIF WhiteBalance", "1"},
                     {"Image Software", "Ver.1.03"}};

  out[2].name = "iphone-6";
  out[2].jpeg_quality = 88;
  out[2].noise_sigma = 0.012;
  out[2].color_matrix = matrix({1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0});
  out[2].metadata = {{"Image Make", "Apple"},
                     {"Image Model", "iPhone 6"},
                     {"EXIF LensMake", "Apple"},
                     {"EXIF FocalLength", "4.15"},
                     {"EXIF Flash", "24"},
                     {"EXIF WhiteBalance", "0"},
                     {"EXIF UserComment", "Processed with VSCOcam"}};

  out[3].name = "fuji-xt1";
  out[3].jpeg_quality = 60;
  out[3].noise_sigma = 0.008;
  out[3].color_matrix = matrix({0.9, 0.08, 0.02, 0.06, 0.9, 0.04, 0.0, 0.1, 0.9});
  out[3].metadata = {{"Image Make", "FUJIFILM"},
                     {"Image Model", "X-T1"},
                     {"EXIF LensMake", "FUJIFILM"},
                     {"EXIF FocalLength", "35"},
                     {"EXIF Flash", "24"},
                     {"EXIF WhiteBalance", "1"}};
  return out;
}

std::vector<CameraProfile> read_profiles(const fs::path& path) {
  std::vector<CameraProfile> out;
  try {
    const auto j = json::parse(read_text(path));
    const auto& list = j.is_object() ? j.at("profiles") : j;
    for (const auto& p : list) out.push_back(profile_from_json(p));
  } catch (const json::exception& e) {
    throw InputError("bad profiles file " + path.string() + ": " + e.what());
  }
  validate_profiles(out);
  return out;
}

void write_profiles(const fs::path& path, const std::vector<CameraProfile>& profiles) {
  json j;
  j["profiles"] = json::array();
  for (const auto& p : profiles) j["profiles"].push_back(profile_to_json(p));
  write_text(path, j.dump(2) + "\n");
}

RenderedPhoto render_photo(const CameraProfile& profile, int width, int height, Rng& rng) {
  if (width <= 0 || height <= 0) throw InputError("image size must be positive");
  const std::size_t n = std::size_t(width) * std::size_t(height);
  std::vector<float> scene(n * 3);

  // Gradient between two random colors along a random direction.
  std::array<double, 3> c0, c1;
  for (int c = 0; c < 3; ++c) {
    c0[std::size_t(c)] = 0.1 + 0.8 * uniform_real(rng);
    c1[std::size_t(c)] = 0.1 + 0.8 * uniform_real(rng);
  }
  const double theta = 2 * M_PI * uniform_real(rng);
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double span = std::abs(dx) * width + std::abs(dy) * height;
  const double offset = std::min(0.0, dx * width) + std::min(0.0, dy * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = (dx * x + dy * y - offset) / span;
      for (int c = 0; c < 3; ++c) {
        scene[(std::size_t(y) * width + x) * 3 + c] =
            float((1 - t) * c0[std::size_t(c)] + t * c1[std::size_t(c)]);
      }
    }
  }

  // Shapes with random colors and opacity.
  const int shapes = uniform_int(rng, 3, 8);
  for (int s = 0; s < shapes; ++s) {
    const bool circle = coin(rng);
    const double cx = uniform_real(rng) * width, cy = uniform_real(rng) * height;
    const double rx = (0.05 + 0.2 * uniform_real(rng)) * width;
    const double ry = circle ? rx : (0.05 + 0.2 * uniform_real(rng)) * height;
    const double alpha = 0.6 + 0.4 * uniform_real(rng);
    std::array<double, 3> col;
    for (auto& v : col) v = uniform_real(rng);
    const int x0 = std::max(0, int(cx - rx)), x1 = std::min(width, int(cx + rx) + 1);
    const int y0 = std::max(0, int(cy - ry)), y1 = std::min(height, int(cy + ry) + 1);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (circle) {
          const double u = (x - cx) / rx, v = (y - cy) / ry;
          if (u * u + v * v > 1) continue;
        }
        float* px = &scene[(std::size_t(y) * width + x) * 3];
        for (int c = 0; c < 3; ++c) px[c] = float((1 - alpha) * px[c] + alpha * col[std::size_t(c)]);
      }
    }
  }

  // Smooth texture: a coarse random field upsampled bicubically.
  const int gw = std::max(2, width / 48), gh = std::max(2, height / 48);
  cv::Mat coarse(gh, gw, CV_32FC3);
  std::normal_distribution<float> tex(0.0f, 0.08f);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      auto& v = coarse.at<cv::Vec3f>(y, x);
      for (int c = 0; c < 3; ++c) v[c] = tex(rng);
    }
  }
  cv::Mat fine;
  cv::resize(coarse, fine, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);

  RenderedPhoto out;
  out.clean.resize(n * 3);
  out.noisy = ImageU8(width, height);
  const auto& m = profile.color_matrix;
  std::normal_distribution<double> noise(0.0, profile.noise_sigma);
  for (int y = 0; y < height; ++y) {
    const auto* trow = fine.ptr<cv::Vec3f>(y);
    for (int x = 0; x < width; ++x) {
      const std::size_t i = (std::size_t(y) * width + x) * 3;
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(double(scene[i + c]) + trow[x][c], 0.0, 1.0);
      for (int r = 0; r < 3; ++r) {
        const double v = m[std::size_t(r)][0] * rgb[0] + m[std::size_t(r)][1] * rgb[1] +
                         m[std::size_t(r)][2] * rgb[2];
        const double clean = std::clamp(v, 0.0, 1.0);
        out.clean[i + r] = float(clean);
        const double noisy = profile.noise_sigma > 0 ? clean + noise(rng) : clean;
        out.noisy.rgb[i + r] = std::uint8_t(std::lround(std::clamp(noisy, 0.0, 1.0) * 255.0));
      }
    }
  }
  out.jpeg = encode_jpeg(out.noisy, profile.jpeg_quality);
  return out;
}

namespace {

json corpus_to_json(const SynthCorpus& c) {
  json j;
  j["seed"] = c.seed;
  j["width"] = c.width;
  j["height"] = c.height;
  j["profiles"] = json::array();
  for (const auto& p : c.profiles) j["profiles"].push_back(profile_to_json(p));
  j["photos"] = json::array();
  for (const auto& p : c.photos) {
    j["photos"].push_back(
        {{"photo_id", p.photo_id}, {"profile", p.profile}, {"path", p.path.generic_string()}});
  }
  return j;
}

}  // namespace

SynthCorpus gen_corpus(const std::vector<CameraProfile>& profiles, int photos_per_profile,
                       int width, int height, std::uint64_t seed, const fs::path& out,
                       int workers) {
  if (profiles.size() < 2) throw InputError("synthetic corpus needs at least two profiles");
  if (photos_per_profile < 1) throw InputError("photos per profile must be positive");
  validate_profiles(profiles);
  SynthCorpus corpus;
  corpus.profiles = profiles;
  corpus.width = width;
  corpus.height = height;
  corpus.seed = seed;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    for (int k = 0; k < photos_per_profile; ++k) {
      char id[64];
      std::snprintf(id, sizeof id, "cam%zu_%04d.jpg", p, k);
      corpus.photos.push_back({id, profiles[p].name, fs::path("images") / id});
    }
  }
  fs::create_directories(out / "images");
  parallel_for(corpus.photos.size(), workers, [&](std::size_t i) {
    const std::size_t p = i / std::size_t(photos_per_profile);
    const std::size_t k = i % std::size_t(photos_per_profile);
    Rng rng = make_rng(seed, 100 + p, k);
    const auto photo = render_photo(profiles[p], width, height, rng);
    const auto path = out / corpus.photos[i].path;
    write_file(path, photo.jpeg);
    write_sidecar(default_sidecar_path(path), profiles[p].metadata);
  });
  std::vector<ManifestEntry> manifest;
  for (const auto& ph : corpus.photos) {
    manifest.push_back({ph.photo_id, ph.path, std::nullopt});
  }
  // Paths in the manifest are relative to its folder.
  write_manifest(out / "manifest.jsonl", manifest);
  write_text(out / "synth.json", corpus_to_json(corpus).dump(2) + "\n");
  for (auto& ph : corpus.photos) ph.path = out / ph.path;
  return corpus;
}

SynthCorpus read_synth_corpus(const fs::path& dir) {
  SynthCorpus c;
  try {
    const auto j = json::parse(read_text(dir / "synth.json"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    for (const auto& p : j.at("profiles")) c.profiles.push_back(profile_from_json(p));
    for (const auto& p : j.at("photos")) {
      c.photos.push_back({p.at("photo_id").get<std::string>(), p.at("profile").get<std::string>(),
                          dir / p.at("path").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw InputError("bad synth.json in " + dir.string() + ": " + e.what());
  }
  return c;
}

SpliceOutput gen_splice(const ImageU8& host, const ImageU8& donor, double region_fraction,
                        std::uint64_t seed) {
  if (!(region_fraction > 0 && region_fraction < 0.5)) {
    throw InputError("region fraction must be in (0, 0.5)");
  }
  if (host.width != donor.width || host.height != donor.height) {
    throw InputError("host and donor must have the same size");
  }
  const int w = host.width, h = host.height;
  Rng rng(derive_seed(seed, kSpliceStream, 0));
  SpliceOutput out;
  out.shape = coin(rng) ? SpliceShape::kRectangle : SpliceShape::kEllipse;
  const double area = region_fraction * w * h;
  const double aspect = 0.6 + 1.0 * uniform_real(rng);
  double bw, bh;
  if (out.shape == SpliceShape::kRectangle) {
    bw = std::sqrt(area * aspect);
    bh = area / bw;
  } else {
    const double a = std::sqrt(area * aspect / M_PI);
    const double b = area / (M_PI * a);
    bw = 2 * a;
    bh = 2 * b;
  }
  bw = std::min(bw, double(w - 4));
  bh = std::min(bh, double(h - 4));
  const int iw = std::max(1, int(std::lround(bw))), ih = std::max(1, int(std::lround(bh)));
  out.x0 = uniform_int(rng, 2, std::max(2, w - iw - 2));
  out.y0 = uniform_int(rng, 2, std::max(2, h - ih - 2));
  out.x1 = out.x0 + iw;
  out.y1 = out.y0 + ih;

  out.image = host;
  out.mask = Mask(w, h);
  const double cx = 0.5 * (out.x0 + out.x1), cy = 0.5 * (out.y0 + out.y1);
  const double a = 0.5 * iw, b = 0.5 * ih;
  // Signed distance to the shape edge (positive inside), then a 2-px ramp.
  const int fx0 = std::max(0, out.x0 - 2), fx1 = std::min(w, out.x1 + 2);
  const int fy0 = std::max(0, out.y0 - 2), fy1 = std::min(h, out.y1 + 2);
  for (int y = fy0; y < fy1; ++y) {
    for (int x = fx0; x < fx1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double d;
      if (out.shape == SpliceShape::kRectangle) {
        d = std::min({px - out.x0, out.x1 - px, py - out.y0, out.y1 - py});
      } else {
        const double u = (px - cx) / a, v = (py - cy) / b;
        d = (1.0 - std::sqrt(u * u + v * v)) * std::min(a, b);
      }
      if (d >= 0) out.mask.at(x, y) = 1;
      const double alpha = std::clamp(0.5 + d / 2.0, 0.0, 1.0);
      if (alpha <= 0) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = alpha * donor.at(x, y, c) + (1 - alpha) * host.at(x, y, c);
        out.image.at(x, y, c) = std::uint8_t(std::lround(v));
      }
    }
  }
  return out;
}

SpliceOutput gen_splice(const ImageU8& host, const std::string& host_profile,
                        const ImageU8& donor, const std::string& donor_profile,
                        double region_fraction, std::uint64_t seed) {
  if (host_profile == donor_profile) {
    throw InputError("host and donor come from the same profile (" + host_profile + ")");
  }
  return gen_splice(host, donor, region_fraction, seed);
}

void gen_splice_set(const SynthCorpus& corpus, int count, double region_fraction,
                    std::uint64_t seed, const fs::path& out) {
  if (count < 1) throw InputError("splice count must be positive");
  std::vector<std::string> profiles;
  for (const auto& p : corpus.photos) {
    if (std::find(profiles.begin(), profiles.end(), p.profile) == profiles.end()) {
      profiles.push_back(p.profile);
    }
  }
  if (profiles.size() < 2) throw InputError("splicing needs photos from two profiles");

  // Authentic images come from one shuffled half, splice hosts and donors
  // from the other, when the corpus is large enough.
  std::vector<std::size_t> order(corpus.photos.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(seed, kAuthenticStream, 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::vector<std::size_t> authentic, pool;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < std::size_t(count) && order.size() >= 2 * std::size_t(count) ? authentic : pool)
        .push_back(order[i]);
  }
  if (authentic.empty()) {
    for (int k = 0; k < count; ++k) authentic.push_back(order[std::size_t(k) % order.size()]);
  }
  std::sort(pool.begin(), pool.end());

  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  fs::create_directories(out / "authentic");
  std::string manifest;
  for (int k = 0; k < count; ++k) {
    Rng rng = make_rng(seed, kSpliceStream, std::uint64_t(k));
    const auto& host = corpus.photos[pool[std::size_t(uniform_int(rng, 0, int(pool.size()) - 1))]];
    std::vector<std::size_t> donors;
    for (auto i : pool) {
      if (corpus.photos[i].profile != host.profile) donors.push_back(i);
    }
    if (donors.empty()) throw InputError("no donor from a different profile");
    const auto& donor = corpus.photos[donors[std::size_t(uniform_int(rng, 0, int(donors.size()) - 1))]];
    const auto s = gen_splice(load_image(host.path), host.profile, load_image(donor.path),
                              donor.profile, region_fraction, rng());
    char id[32];
    std::snprintf(id, sizeof id, "splice_%03d", k);
    write_file(out / "images" / (std::string(id) + ".png"), encode_png(s.image));
    save_mask_png(out / "masks" / (std::string(id) + ".png"), s.mask);
    json line;
    line["photo_id"] = id;
    line["path"] = "images/" + std::string(id) + ".png";
    line["spliced"] = true;
    line["host"] = host.photo_id;
    line["donor"] = donor.photo_id;
    line["shape"] = s.shape == SpliceShape::kRectangle ? "rectangle" : "ellipse";
    line["mask_fraction"] = double(s.mask.count()) / double(s.mask.bits.size());
    manifest += line.dump() + "\n";
  }
  for (int k = 0; k < count; ++k) {
    const auto& photo = corpus.photos[authentic[std::size_t(k) % authentic.size()]];
    char id[32];
    std::snprintf(id, sizeof id, "auth_%03d", k);
    write_file(out / "authentic" / (std::string(id) + ".jpg"), read_file(photo.path));
    json line;
    line["photo_id"] = id;
    line["path"] = "authentic/" + std::string(id) + ".jpg";
    line["spliced"] = false;
    line["source"] = photo.photo_id;
    manifest += line.dump() + "\n";
  }
  write_text(out / "manifest.jsonl", manifest);
}

}  // namespace exifcons
