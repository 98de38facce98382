#include <gtest/gtest.h>

#include "exifcons/errors.hpp"
#include "exifcons/evaluator.hpp"
#include "oracles.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

using Labels = std::vector<std::uint8_t>;

FloatMap map_of(int w, int h, const std::vector<double>& v) {
  FloatMap m(w, h);
  m.values = v;
  return m;
}

Mask mask_of(int w, int h, const Labels& bits) {
  Mask m(w, h);
  m.bits = bits;
  return m;
}

void expect_matches_oracle(const FloatMap& pred, const Mask& truth,
                           const std::vector<double>& thresholds) {
  const auto o = oracle::localization(pred, truth, thresholds);
  if (o.ap) {
    EXPECT_NEAR(localization_ap(pred, truth), *o.ap, 1e-12);
    EXPECT_NEAR(permuted_ap(pred, truth), *o.p_ap, 1e-12);
  } else {
    EXPECT_THROW(localization_ap(pred, truth), UndefinedMetricError);
  }
  EXPECT_NEAR(ciou(pred, truth, thresholds), o.ciou, 1e-12);
  const auto mf = mcc_f1(pred, truth, thresholds);
  EXPECT_NEAR(mf.mcc, o.mcc, 1e-12);
  EXPECT_NEAR(mf.f1, o.f1, 1e-12);
}

}  // namespace

TEST(AveragePrecision, PerfectRanking) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const Labels l{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(average_precision(s, l), 1.0);
}

TEST(AveragePrecision, HandEnumerated) {
  const std::vector<double> s{0.9, 0.5, 0.2};
  const Labels l{1, 0, 1};
  EXPECT_NEAR(average_precision(s, l), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
}

TEST(AveragePrecision, NoPositives) {
  const std::vector<double> s{0.9, 0.5};
  const Labels l{0, 0};
  EXPECT_THROW(average_precision(s, l), UndefinedMetricError);
}

TEST(AveragePrecision, TiesFormOneStep) {
  const std::vector<double> s{0.5, 0.5, 0.5, 0.1};
  const Labels l{1, 0, 1, 1};
  EXPECT_NEAR(average_precision(s, l), *oracle::average_precision(s, l), 1e-12);
  EXPECT_NEAR(average_precision(s, l), (2.0 / 3.0) * (2.0 / 3.0) + (1.0 / 3.0) * 0.75, 1e-12);
}

TEST(AveragePrecision, RandomScoresGivePositiveRate) {
  Rng rng(1);
  for (double rho : {0.1, 0.3, 0.6}) {
    std::vector<double> s(100'000);
    Labels l(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = uniform_real(rng);
      l[i] = coin(rng, rho);
    }
    EXPECT_NEAR(average_precision(s, l), rho, 0.01);
  }
}

TEST(AveragePrecision, MatchesOracleOnRandomLists) {
  Rng rng(2);
  for (int k = 0; k < 300; ++k) {
    const int n = uniform_int(rng, 1, 40);
    std::vector<double> s(static_cast<std::size_t>(n));
    Labels l(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[std::size_t(i)] = uniform_int(rng, 0, 6) / 6.0;  // plenty of ties
      l[std::size_t(i)] = coin(rng, 0.4);
    }
    const auto o = oracle::average_precision(s, l);
    if (!o) continue;
    ASSERT_NEAR(average_precision(s, l), *o, 1e-12);
  }
}

TEST(Localization, PerfectAndInverted) {
  const auto truth = mask_of(4, 1, {1, 1, 0, 0});
  const auto perfect = map_of(4, 1, {1, 1, 0, 0});
  const auto inverted = map_of(4, 1, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(localization_ap(perfect, truth), 1.0);
  EXPECT_DOUBLE_EQ(permuted_ap(perfect, truth), 1.0);
  EXPECT_DOUBLE_EQ(permuted_ap(inverted, truth), 1.0);
  EXPECT_NEAR(localization_ap(inverted, truth), *oracle::average_precision({0, 0, 1, 1}, {1, 1, 0, 0}),
              1e-12);
  const auto th = threshold_sweep();
  EXPECT_DOUBLE_EQ(ciou(perfect, truth, th), 1.0);
  EXPECT_DOUBLE_EQ(mcc_f1(perfect, truth, th).mcc, 1.0);
  EXPECT_DOUBLE_EQ(mcc_f1(perfect, truth, th).f1, 1.0);
}

TEST(Localization, CheckerboardVsHalfPlane) {
  FloatMap pred(8, 8);
  Mask truth(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      pred.at(x, y) = (x + y) % 2;
      truth.at(x, y) = x < 4;
    }
  }
  expect_matches_oracle(pred, truth, threshold_sweep());
}

TEST(Localization, ConstantHalfMap) {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    FloatMap pred(8, 8, 0.5);
    Mask truth(8, 8);
    for (auto& b : truth.bits) b = coin(rng, 0.3);
    expect_matches_oracle(pred, truth, threshold_sweep());
  }
}

TEST(Localization, NinetyPercentCorrect) {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    FloatMap pred(16, 16);
    Mask truth(16, 16);
    for (std::size_t i = 0; i < truth.bits.size(); ++i) {
      truth.bits[i] = (i % 16) < 6;
      const bool flip = coin(rng, 0.1);
      pred.values[i] = (truth.bits[i] != flip) ? 1.0 : 0.0;
    }
    expect_matches_oracle(pred, truth, threshold_sweep());
  }
}

TEST(Localization, ComplementMatchesOracle) {
  const auto truth = mask_of(3, 2, {1, 0, 0, 1, 1, 0});
  const auto pred = map_of(3, 2, {0, 1, 1, 0, 0, 1});
  expect_matches_oracle(pred, truth, {0.0, 1.0});
  expect_matches_oracle(pred, truth, threshold_sweep(5));
}

TEST(Localization, AllPositiveClosedForm) {
  for (int pos : {1, 3, 7}) {
    Mask truth(10, 1);
    for (int i = 0; i < pos; ++i) truth.bits[std::size_t(i)] = 1;
    const FloatMap pred(10, 1, 1.0);
    const auto c = confusion_at(pred, truth, 0.5);
    const double rho = pos / 10.0;
    EXPECT_NEAR(f1_score(c), 2 * rho / (1 + rho), 1e-12);
    EXPECT_EQ(mcc_score(c), 0.0);
  }
}

// Every binary (prediction, truth) pair on grids of up to 8 pixels.
TEST(Localization, ExhaustiveSmallGrids) {
  const auto th = threshold_sweep(3);
  for (int n = 1; n <= 8; ++n) {
    for (int pm = 0; pm < (1 << n); ++pm) {
      for (int tm = 0; tm < (1 << n); ++tm) {
        FloatMap pred(n, 1);
        Mask truth(n, 1);
        for (int i = 0; i < n; ++i) {
          pred.values[std::size_t(i)] = (pm >> i) & 1;
          truth.bits[std::size_t(i)] = (tm >> i) & 1;
        }
        const auto o = oracle::localization(pred, truth, th);
        if (o.ap) {
          ASSERT_NEAR(localization_ap(pred, truth), *o.ap, 1e-12);
          ASSERT_NEAR(permuted_ap(pred, truth), *o.p_ap, 1e-12);
        }
        ASSERT_NEAR(ciou(pred, truth, th), o.ciou, 1e-12);
        const auto mf = mcc_f1(pred, truth, th);
        ASSERT_NEAR(mf.mcc, o.mcc, 1e-12);
        ASSERT_NEAR(mf.f1, o.f1, 1e-12);
      }
    }
  }
}

TEST(Localization, Properties) {
  Rng rng(5);
  const auto coarse = threshold_sweep(5);
  const auto fine = threshold_sweep(256);
  for (int k = 0; k < 100; ++k) {
    FloatMap pred(6, 5);
    Mask truth(6, 5);
    for (auto& v : pred.values) v = uniform_int(rng, 0, 255) / 255.0;
    for (auto& b : truth.bits) b = coin(rng, 0.35);
    truth.bits[0] = 1;
    EXPECT_GE(permuted_ap(pred, truth), localization_ap(pred, truth));

    FloatMap flipped = pred;
    for (auto& v : flipped.values) v = 1.0 - v;
    EXPECT_NEAR(permuted_ap(pred, truth), permuted_ap(flipped, truth), 1e-12);

    // The 5-step sweep is a subset of the 256-step one.
    EXPECT_GE(ciou(pred, truth, fine), ciou(pred, truth, coarse));
    EXPECT_GE(mcc_f1(pred, truth, fine).mcc, mcc_f1(pred, truth, coarse).mcc);
    EXPECT_GE(mcc_f1(pred, truth, fine).f1, mcc_f1(pred, truth, coarse).f1);

    const auto sweep = sweep_confusions(pred, truth, coarse);
    for (std::size_t t = 0; t < coarse.size(); ++t) {
      const auto c = confusion_at(pred, truth, coarse[t]);
      EXPECT_EQ(sweep[t].tp, c.tp);
      EXPECT_EQ(sweep[t].fp, c.fp);
      EXPECT_EQ(sweep[t].tn, c.tn);
      EXPECT_EQ(sweep[t].fn, c.fn);
    }
  }
}

TEST(Localization, IgnoreBand) {
  Mask truth(6, 1);
  truth.bits = {1, 1, 1, 0, 0, 0};
  const auto band = boundary_band(truth, 1);
  EXPECT_EQ(band.bits, (Labels{0, 0, 1, 1, 0, 0}));
  const auto pred = map_of(6, 1, {1, 1, 0, 1, 0, 0});
  EXPECT_DOUBLE_EQ(localization_ap(pred, truth, band), 1.0);
  expect_matches_oracle(pred, truth, threshold_sweep(4));
  const auto o = oracle::localization(pred, truth, threshold_sweep(4), &band);
  EXPECT_NEAR(ciou(pred, truth, threshold_sweep(4), band), o.ciou, 1e-12);
}

TEST(Detection, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.2};
  EXPECT_DOUBLE_EQ(evaluate_detection(s, Labels{1, 1, 0}), 1.0);
  EXPECT_THROW(evaluate_detection(s, Labels{1, 1, 1}), UndefinedMetricError);
}

TEST(ThresholdSweep, EvenlySpaced) {
  const auto t = threshold_sweep(256);
  ASSERT_EQ(t.size(), 256u);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t.back(), 1.0);
  EXPECT_DOUBLE_EQ(t[51], 0.2);
}

TEST(LoadBenchmark, Layout) {
  testutil::TempDir dir;
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::filesystem::create_directories(dir / "authentic");
  const auto img = testutil::flat_image(8, 8, 90);
  Mask mask(8, 8);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) mask.at(x, y) = 1;
  }
  for (const char* stem : {"a", "b", "c"}) {
    save_image(dir / "images" / (std::string(stem) + ".png"), img);
    save_mask_png(dir / "masks" / (std::string(stem) + ".png"), mask);
  }
  save_image(dir / "authentic" / "z.jpg", img);
  const auto items = load_benchmark("columbia", dir.path());
  ASSERT_EQ(items.size(), 4u);
  int spliced = 0;
  for (const auto& it : items) {
    spliced += it.spliced;
    const auto ones = std::count(it.truth.bits.begin(), it.truth.bits.end(), 1);
    EXPECT_EQ(ones, it.spliced ? 9 : 0) << it.image_id;
  }
  EXPECT_EQ(spliced, 3);

  std::filesystem::remove(dir / "masks" / "b.png");
  try {
    load_benchmark("columbia", dir.path());
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_benchmark("columbia", dir / "absent"), DatasetError);
}
