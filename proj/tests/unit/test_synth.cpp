#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "exifcons/errors.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/synth.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> tree(const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Profiles, DefaultsAreDistinct) {
  const auto ps = default_profiles();
  ASSERT_GE(ps.size(), 4u);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      const bool pixel = ps[i].jpeg_quality != ps[j].jpeg_quality ||
                         ps[i].noise_sigma != ps[j].noise_sigma ||
                         ps[i].color_matrix != ps[j].color_matrix;
      EXPECT_TRUE(pixel) << ps[i].name << " vs " << ps[j].name;
      EXPECT_NE(ps[i].metadata, ps[j].metadata);
    }
  }
}

TEST(Profiles, FileRoundTrip) {
  testutil::TempDir dir;
  write_profiles(dir / "p.json", default_profiles());
  EXPECT_EQ(read_profiles(dir / "p.json"), default_profiles());
}

TEST(Profiles, RejectsDuplicates) {
  testutil::TempDir dir;
  auto ps = default_profiles();
  ps[1] = ps[0];
  write_profiles(dir / "p.json", ps);
  EXPECT_THROW(read_profiles(dir / "p.json"), InputError);
}

TEST(GenCorpus, CardinalityAndDeterminism) {
  testutil::TempDir a, b;
  const auto ps = default_profiles();
  const auto ca = gen_corpus(ps, 3, 160, 140, 11, a.path());
  gen_corpus(ps, 3, 160, 140, 11, b.path(), 2);
  EXPECT_EQ(ca.photos.size(), ps.size() * 3);

  const auto files = tree(a.path());
  EXPECT_EQ(files, tree(b.path()));
  std::size_t jpegs = 0, sidecars = 0;
  for (const auto& f : files) {
    jpegs += f.ends_with(".jpg");
    sidecars += f.ends_with(".exif.json");
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(jpegs, ps.size() * 3);
  EXPECT_EQ(sidecars, ps.size() * 3);

  const auto records = read_manifest(a / "manifest.jsonl");
  ASSERT_EQ(records.size(), ca.photos.size());
  std::map<std::string, std::string> profile_of;
  for (const auto& ph : ca.photos) profile_of[ph.photo_id] = ph.profile;
  std::map<std::string, std::set<exif::AttributeMap>> maps_per_profile;
  for (const auto& entry : records) {
    ASSERT_TRUE(profile_of.count(entry.photo_id)) << entry.photo_id;
    maps_per_profile[profile_of[entry.photo_id]].insert(extract_metadata(entry.path).attributes);
  }
  EXPECT_EQ(maps_per_profile.size(), ps.size());
  for (const auto& [profile, maps] : maps_per_profile) EXPECT_EQ(maps.size(), 1u) << profile;

  const auto back = read_synth_corpus(a.path());
  EXPECT_EQ(back.photos.size(), ca.photos.size());
  EXPECT_EQ(back.seed, 11u);
}

TEST(GenCorpus, NeedsTwoProfiles) {
  testutil::TempDir dir;
  EXPECT_THROW(gen_corpus({default_profiles()[0]}, 2, 160, 140, 1, dir.path()), InputError);
}

// Residual of the quantized noisy image against the clean render, over
// pixels where neither clipping bound was reached.
TEST(RenderPhoto, NoiseLevelMatchesProfile) {
  for (const auto& profile : default_profiles()) {
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (int k = 0; k < 4; ++k) {
      Rng rng = make_rng(5, 100, std::uint64_t(k));
      const auto r = render_photo(profile, 192, 160, rng);
      for (std::size_t i = 0; i < r.clean.size(); ++i) {
        const int q = r.noisy.rgb[i];
        if (q == 0 || q == 255) continue;
        const double d = q / 255.0 - r.clean[i];
        sum += d;
        sq += d * d;
        ++n;
      }
    }
    const double mean = sum / double(n);
    const double sd = std::sqrt(sq / double(n) - mean * mean);
    EXPECT_NEAR(sd, profile.noise_sigma, 0.15 * profile.noise_sigma) << profile.name;
  }
}

TEST(RenderPhoto, JpegQualityReadsBack) {
  for (const auto& profile : default_profiles()) {
    Rng rng(3);
    const auto r = render_photo(profile, 160, 128, rng);
    const auto q = exif::estimate_jpeg_quality(exif::scan_jpeg(r.jpeg));
    ASSERT_TRUE(q.has_value());
    EXPECT_EQ(*q, profile.jpeg_quality) << profile.name;
  }
}

TEST(GenSplice, AreaAndMask) {
  const auto host = testutil::noise_image(320, 240, 1);
  const auto donor = testutil::flat_image(320, 240, 7);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = gen_splice(host, donor, 0.2, seed);
    const auto area = double(std::count(s.mask.bits.begin(), s.mask.bits.end(), 1)) /
                      double(s.mask.bits.size());
    EXPECT_GE(area, 0.15) << seed;
    EXPECT_LE(area, 0.25) << seed;
    for (int y = 0; y < 240; ++y) {
      for (int x = 0; x < 320; ++x) {
        const bool inside_box = x >= s.x0 && x < s.x1 && y >= s.y0 && y < s.y1;
        if (!inside_box) {
          ASSERT_EQ(s.mask.at(x, y), 0);
          // Outside the feathered band the host is untouched.
          if (x < s.x0 - 2 || x >= s.x1 + 2 || y < s.y0 - 2 || y >= s.y1 + 2) {
            for (int c = 0; c < 3; ++c) ASSERT_EQ(s.image.at(x, y, c), host.at(x, y, c));
          }
        }
      }
    }
  }
}

TEST(GenSplice, Preconditions) {
  const auto a = testutil::noise_image(200, 150, 1);
  const auto b = testutil::noise_image(200, 150, 2);
  EXPECT_THROW(gen_splice(a, "cam", b, "cam", 0.2, 1), InputError);
  EXPECT_NO_THROW(gen_splice(a, "cam", b, "other", 0.2, 1));
  EXPECT_THROW(gen_splice(a, b, 0.5, 1), InputError);
  EXPECT_THROW(gen_splice(a, b, 0.0, 1), InputError);
  EXPECT_THROW(gen_splice(a, testutil::noise_image(100, 150, 2), 0.2, 1), InputError);
}

TEST(GenSpliceSet, Layout) {
  testutil::TempDir dir;
  const auto corpus = gen_corpus(default_profiles(), 4, 160, 140, 2, dir / "corpus");
  gen_splice_set(corpus, 5, 0.2, 3, dir / "splices");
  std::size_t images = 0, masks = 0, authentic = 0;
  for (const auto& f : tree(dir / "splices")) {
    images += f.starts_with("images/");
    masks += f.starts_with("masks/");
    authentic += f.starts_with("authentic/");
  }
  EXPECT_EQ(images, 5u);
  EXPECT_EQ(masks, 5u);
  EXPECT_EQ(authentic, 5u);
  EXPECT_TRUE(std::filesystem::exists(dir / "splices" / "manifest.jsonl"));
}
