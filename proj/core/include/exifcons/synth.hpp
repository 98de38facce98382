#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exifcons/exif.hpp"
#include "exifcons/image.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/rng.hpp"

namespace exifcons {

/// Simulated camera: pixel pipeline parameters plus the metadata it writes.
struct CameraProfile {
  std::string name;
  int jpeg_quality = 90;
  double noise_sigma = 0.01;  // in [0,1] intensity units
  std::array<std::array<double, 3>, 3> color_matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  exif::AttributeMap metadata;

  bool operator==(const CameraProfile&) const = default;
};

std::vector<CameraProfile> default_profiles();
std::vector<CameraProfile> read_profiles(const std::filesystem::path& path);
void write_profiles(const std::filesystem::path& path, const std::vector<CameraProfile>& profiles);

/// Intermediate stages of one rendered photo, exposed for estimator tests.
struct RenderedPhoto {
  std::vector<float> clean;  // HWC after the color matrix, before noise, in [0,1]
  ImageU8 noisy;             // quantized after additive noise, before JPEG
  std::vector<std::uint8_t> jpeg;
};

/// Procedural scene (gradient, shapes, smooth texture) through the profile's
/// color matrix, Gaussian noise and JPEG encoder.
RenderedPhoto render_photo(const CameraProfile& profile, int width, int height, Rng& rng);

struct SynthPhoto {
  std::string photo_id;
  std::string profile;
  std::filesystem::path path;
};

struct SynthCorpus {
  std::vector<CameraProfile> profiles;
  std::vector<SynthPhoto> photos;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
};

/// Writes <out>/images/<photo>.jpg with "<photo>.exif.json" sidecars,
/// <out>/manifest.jsonl and <out>/synth.json. Photo k of profile p uses a
/// generator derived from (seed, p, k), so output is identical for any
/// worker count.
SynthCorpus gen_corpus(const std::vector<CameraProfile>& profiles, int photos_per_profile,
                       int width, int height, std::uint64_t seed,
                       const std::filesystem::path& out, int workers = 1);

SynthCorpus read_synth_corpus(const std::filesystem::path& dir);

enum class SpliceShape { kRectangle, kEllipse };

struct SpliceOutput {
  ImageU8 image;
  Mask mask;  // geometric interior of the pasted region
  SpliceShape shape = SpliceShape::kRectangle;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bounding box, half-open
};

/// Pastes a donor region covering about `region_fraction` of the host into
/// the host at the same location, with a 2-px feathered edge. Host and donor
/// must be the same size.
SpliceOutput gen_splice(const ImageU8& host, const ImageU8& donor, double region_fraction,
                        std::uint64_t seed);

/// Same, after checking that host and donor come from different profiles.
SpliceOutput gen_splice(const ImageU8& host, const std::string& host_profile,
                        const ImageU8& donor, const std::string& donor_profile,
                        double region_fraction, std::uint64_t seed);

/// Writes <out>/images/<id>.png spliced images, <out>/masks/<id>.png,
/// <out>/authentic/<id>.jpg copies of untouched photos and
/// <out>/manifest.jsonl.
void gen_splice_set(const SynthCorpus& corpus, int count, double region_fraction,
                    std::uint64_t seed, const std::filesystem::path& out);

}  // namespace exifcons
