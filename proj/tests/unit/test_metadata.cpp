#include <gtest/gtest.h>

#include <algorithm>

#include "exifcons/errors.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/rng.hpp"
#include "oracles.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

PhotoRecord rec(std::string id, exif::AttributeMap attrs) {
  PhotoRecord r;
  r.photo_id = std::move(id);
  r.attributes = std::move(attrs);
  return r;
}

std::vector<PhotoRecord> random_corpus(Rng& rng, int max_photos) {
  const int n = uniform_int(rng, 0, max_photos);
  const int n_attrs = uniform_int(rng, 1, 12);
  std::vector<PhotoRecord> out;
  for (int i = 0; i < n; ++i) {
    PhotoRecord r;
    r.photo_id = "p" + std::to_string(i);
    for (int a = 0; a < n_attrs; ++a) {
      if (coin(rng, 0.3)) continue;
      const int v = uniform_int(rng, 0, uniform_int(rng, 0, 6));
      r.attributes["EXIF Attr" + std::to_string(a)] = "v" + std::to_string(v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void expect_matches_oracle(const std::vector<PhotoRecord>& records, std::size_t min_attr,
                           std::size_t min_value) {
  const auto vocab = build_vocabulary(records, min_attr, min_value);
  const auto want = oracle::count_vocabulary(records, min_attr, min_value);
  ASSERT_EQ(vocab.size(), want.attr_photos.size());
  std::size_t i = 0;
  for (const auto& [name, count] : want.attr_photos) {
    EXPECT_EQ(vocab.attributes[i], name);
    EXPECT_EQ(vocab.attr_photo_counts[i], count);
    const auto& values = want.values.at(name);
    ASSERT_EQ(vocab.values[i].size(), values.size());
    std::size_t k = 0;
    for (const auto& [v, c] : values) {
      EXPECT_EQ(vocab.values[i][k], v);
      EXPECT_EQ(vocab.value_counts[i][k], c);
      ++k;
    }
    ++i;
  }
}

}  // namespace

TEST(Vocabulary, TenPhotoFixture) {
  std::vector<PhotoRecord> records;
  for (int i = 0; i < 10; ++i) {
    exif::AttributeMap attrs;
    if (i < 5) attrs["EXIF X"] = "A";
    if (i >= 5 && i < 8) attrs["EXIF X"] = "B";
    records.push_back(rec("p" + std::to_string(i), attrs));
  }
  const auto vocab = build_vocabulary(records, 5, 4);
  ASSERT_EQ(vocab.attributes, std::vector<std::string>{"EXIF X"});
  EXPECT_EQ(vocab.values[0], std::vector<std::string>{"A"});
  EXPECT_EQ(vocab.attr_photo_counts[0], 8u);
}

TEST(Vocabulary, ThresholdAboveCorpusSizeIsEmpty) {
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "Canon"}}),
                                   rec("b", {{"Image Make", "Canon"}})};
  EXPECT_EQ(build_vocabulary(records, 3, 1).size(), 0u);
  EXPECT_EQ(build_vocabulary({}, 1, 1).size(), 0u);
}

TEST(Vocabulary, AttributeThresholdIsStrict) {
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "Canon"}}),
                                   rec("b", {{"Image Make", "Canon"}})};
  EXPECT_EQ(build_vocabulary(records, 2, 1).size(), 0u);
  EXPECT_EQ(build_vocabulary(records, 1, 2).size(), 1u);
}

TEST(Vocabulary, RejectsZeroThresholds) {
  EXPECT_THROW(build_vocabulary({}, 0, 1), InputError);
  EXPECT_THROW(build_vocabulary({}, 1, 0), InputError);
}

TEST(Vocabulary, MatchesCountingOracleOnRandomCorpora) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto records = random_corpus(rng, 300);
    expect_matches_oracle(records, std::size_t(uniform_int(rng, 1, 40)),
                          std::size_t(uniform_int(rng, 1, 30)));
  }
}

TEST(Vocabulary, SerializationIsDeterministic) {
  Rng rng(12);
  auto records = random_corpus(rng, 200);
  const auto a = build_vocabulary(records, 3, 2).to_json();
  std::shuffle(records.begin(), records.end(), rng);
  const auto b = build_vocabulary(records, 3, 2).to_json();
  EXPECT_EQ(a, b);
  const auto parsed = AttributeVocabulary::from_json(a);
  EXPECT_EQ(parsed.to_json(), a);
  EXPECT_EQ(parsed.fingerprint(), fnv1a64(a));
}

TEST(Vocabulary, Monotonicity) {
  Rng rng(13);
  const auto records = random_corpus(rng, 300);
  for (std::size_t t = 1; t < 30; ++t) {
    const auto lo = build_vocabulary(records, 5, t);
    const auto hi = build_vocabulary(records, 5, t + 1);
    for (std::size_t a = 0; a < hi.size(); ++a) {
      for (const auto& v : hi.values[a]) EXPECT_TRUE(lo.admissible(a, v));
    }
    const auto lo_a = build_vocabulary(records, t, 1);
    const auto hi_a = build_vocabulary(records, t + 1, 1);
    for (const auto& name : hi_a.attributes) EXPECT_TRUE(lo_a.attribute_index(name).has_value());
  }
}

TEST(CorpusIndex, GroupsPhotosByValue) {
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "A"}}),
                                   rec("b", {{"Image Make", "A"}}),
                                   rec("c", {{"Image Make", "B"}})};
  const auto vocab = build_vocabulary(records, 1, 1);
  const auto index = index_corpus(records, vocab);
  EXPECT_EQ(index.photos_with("Image Make", "A").size(), 2u);
  EXPECT_EQ(index.photos_with("Image Make", "B").size(), 1u);
}

TEST(CorpusIndex, PrunedValueKeepsPhotoRecord) {
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "A"}}),
                                   rec("b", {{"Image Make", "A"}}),
                                   rec("c", {{"Image Make", "B"}})};
  const auto vocab = build_vocabulary(records, 1, 2);
  const auto index = index_corpus(records, vocab);
  EXPECT_TRUE(index.photos_with("Image Make", "B").empty());
  EXPECT_EQ(index.by_photo.count("c"), 1u);
}

TEST(CorpusIndex, EmptyVocabulary) {
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "A"}})};
  const auto index = index_corpus(records, AttributeVocabulary{});
  EXPECT_TRUE(index.by_value.empty());
}

TEST(CorpusIndex, UnionOfValueListsIsCarrierSet) {
  Rng rng(14);
  const auto records = random_corpus(rng, 200);
  const auto vocab = build_vocabulary(records, 2, 3);
  const auto index = index_corpus(records, vocab);
  for (std::size_t a = 0; a < vocab.size(); ++a) {
    std::set<std::string> from_index;
    for (const auto& v : vocab.values[a]) {
      for (const auto& id : index.photos_with(vocab.attributes[a], v)) from_index.insert(id);
    }
    std::set<std::string> carriers;
    for (const auto& r : records) {
      const auto* v = r.value(vocab.attributes[a]);
      if (v && vocab.admissible(a, *v)) carriers.insert(r.photo_id);
    }
    EXPECT_EQ(from_index, carriers);
  }
}

TEST(Manifest, RelativePathsResolveAgainstManifestFolder) {
  testutil::TempDir dir;
  write_text(dir / "m.jsonl",
             "{\"photo_id\": \"x\", \"path\": \"img/x.jpg\", \"extra\": 1}\n"
             "{\"photo_id\": \"y\", \"path\": \"/abs/y.jpg\", \"sidecar\": \"s/y.json\"}\n");
  const auto entries = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].path, dir.path() / "img/x.jpg");
  EXPECT_EQ(entries[1].path, std::filesystem::path("/abs/y.jpg"));
  EXPECT_EQ(*entries[1].sidecar, dir.path() / "s/y.json");
}

TEST(Records, RoundTrip) {
  testutil::TempDir dir;
  std::vector<PhotoRecord> records{rec("a", {{"Image Make", "A"}, {"EXIF Flash", "16"}}),
                                   rec("b", {})};
  records[0].path = "/x/a.jpg";
  records[0].width = 640;
  records[0].height = 480;
  write_records(dir / "r.jsonl", records);
  const auto back = read_records(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].attributes, records[0].attributes);
  EXPECT_EQ(back[0].path, records[0].path);
  EXPECT_EQ(back[0].width, 640);
  EXPECT_EQ(back[1].photo_id, "b");
}
