#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "exifcons/augment.hpp"
#include "exifcons/image.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

Patch random_patch(std::uint64_t seed) {
  return crop_patch(testutil::noise_image(kPatchSize, kPatchSize, seed), 0, 0);
}

void expect_valid(const Patch& p) {
  ASSERT_EQ(p.pixels.size(), Patch::kValues);
  for (float v : p.pixels) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

}  // namespace

TEST(PostprocessingLabels, IdenticalSpecsAreConsistent) {
  AugmentationSpec s;
  s.rejpeg = 70;
  s.blur = 1.0;
  const std::array<std::uint8_t, 3> all{1, 1, 1};
  EXPECT_EQ(postprocessing_labels(s, s), all);
}

TEST(PostprocessingLabels, DifferentQualityOnlyBreaksRejpeg) {
  AugmentationSpec a, b;
  a.rejpeg = 70;
  b.rejpeg = 90;
  const std::array<std::uint8_t, 3> want{0, 1, 1};
  EXPECT_EQ(postprocessing_labels(a, b), want);
}

TEST(PostprocessingLabels, PresenceVersusAbsence) {
  AugmentationSpec a, b;
  a.resize = 0.5;
  const std::array<std::uint8_t, 3> want{1, 1, 0};
  EXPECT_EQ(postprocessing_labels(a, b), want);
  EXPECT_EQ(postprocessing_labels(b, a), want);
}

TEST(Augmentation, DrawnSpecsUseDiscretizedSets) {
  AugmentationParams params;
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto s = draw_spec(params, rng);
    if (s.rejpeg) EXPECT_NE(std::find(params.jpeg_qualities.begin(), params.jpeg_qualities.end(), *s.rejpeg), params.jpeg_qualities.end());
    if (s.blur) EXPECT_NE(std::find(params.blur_sigmas.begin(), params.blur_sigmas.end(), *s.blur), params.blur_sigmas.end());
    if (s.resize) EXPECT_NE(std::find(params.resize_factors.begin(), params.resize_factors.end(), *s.resize), params.resize_factors.end());
    const std::size_t present = s.rejpeg.has_value() + s.blur.has_value() + s.resize.has_value();
    ASSERT_EQ(s.order.size(), present);
    auto sorted = s.order;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  }
}

TEST(Augmentation, OutputStaysInRange) {
  AugmentationParams params;
  params.op_probability = 1.0;
  Rng rng(4);
  for (int i = 0; i < 12; ++i) {
    auto a = random_patch(std::uint64_t(i));
    auto b = random_patch(std::uint64_t(i) + 100);
    apply_postprocessing(a, b, params, rng);
    expect_valid(a);
    expect_valid(b);
  }
}

TEST(Augmentation, EachOpKeepsShapeAndRange) {
  for (int q : {50, 90}) {
    auto p = random_patch(1);
    rejpeg(p, q);
    expect_valid(p);
  }
  for (double s : {0.5, 2.0}) {
    auto p = random_patch(2);
    gaussian_blur(p, s);
    expect_valid(p);
  }
  for (double f : {0.5, 0.75, 1.25, 1.5}) {
    auto p = random_patch(3);
    resize_roundtrip(p, f);
    expect_valid(p);
  }
}

TEST(Augmentation, BlurSmoothsNoise) {
  auto p = random_patch(5);
  auto variance = [](const Patch& x) {
    double m = 0, v = 0;
    for (float f : x.pixels) m += f;
    m /= double(x.pixels.size());
    for (float f : x.pixels) v += (f - m) * (f - m);
    return v / double(x.pixels.size());
  };
  const double before = variance(p);
  gaussian_blur(p, 2.0);
  EXPECT_LT(variance(p), 0.2 * before);
}

// Per-op match probability when the two specs are drawn independently:
// both absent, or both present with the same one of K parameters.
TEST(Augmentation, MatchProbabilityFormula) {
  AugmentationParams params;
  params.op_probability = 0.4;
  params.same_probability = 0.3;
  const double p = 0.4;
  const double rj = (1 - p) * (1 - p) + p * p / 5.0;
  const double bl = (1 - p) * (1 - p) + p * p / 4.0;
  const double rs = bl;
  EXPECT_NEAR(params.op_match_probability(AugOp::kRejpeg), rj, 1e-12);
  EXPECT_NEAR(params.all_consistent_probability(), 0.3 + 0.7 * rj * bl * rs, 1e-12);
}

TEST(Augmentation, AllConsistentFrequencyMatchesExpectation) {
  AugmentationParams params;
  Rng rng(6);
  const int n = 100'000;
  int all = 0;
  for (int i = 0; i < n; ++i) {
    const auto a = draw_spec(params, rng);
    const bool shared = coin(rng, params.same_probability);
    const auto b = shared ? a : draw_spec(params, rng);
    const auto l = postprocessing_labels(a, b);
    all += l[0] && l[1] && l[2];
  }
  const double freq = double(all) / n;
  EXPECT_GE(freq, 0.5);
  EXPECT_NEAR(freq, params.all_consistent_probability(), 0.005);
}

TEST(Augmentation, ApplyPostprocessingLabelFrequency) {
  AugmentationParams params;
  Rng rng(7);
  const auto base = random_patch(8);
  const int n = 4000;
  int all = 0, shared = 0;
  for (int i = 0; i < n; ++i) {
    Patch a = base, b = base;
    const auto out = apply_postprocessing(a, b, params, rng);
    EXPECT_EQ(out.labels, postprocessing_labels(out.spec_a, out.spec_b));
    all += out.labels[0] && out.labels[1] && out.labels[2];
    shared += out.shared;
  }
  const double sd = std::sqrt(0.25 / n);
  EXPECT_NEAR(double(shared) / n, params.same_probability, 4 * sd);
  EXPECT_NEAR(double(all) / n, params.all_consistent_probability(), 4 * sd);
}
