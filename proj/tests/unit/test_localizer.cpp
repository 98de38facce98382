#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "exifcons/errors.hpp"
#include "exifcons/localizer.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;

namespace {

/// 1 for pixel-identical patches, 0 otherwise.
class IdentityScorer final : public PairScorer {
 public:
  Eigen::MatrixXd score(const std::vector<Patch>& patches) const override {
    const auto n = Eigen::Index(patches.size());
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        s(i, j) = patches[std::size_t(i)].pixels == patches[std::size_t(j)].pixels ? 1.0 : 0.0;
      }
    }
    return s;
  }
};

/// Deliberately asymmetric: depends on the mean brightness of both sides.
class LopsidedScorer final : public PairScorer {
 public:
  Eigen::MatrixXd score(const std::vector<Patch>& patches) const override {
    const auto n = Eigen::Index(patches.size());
    std::vector<double> mean(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
      double s = 0;
      for (float v : patches[i].pixels) s += v;
      mean[i] = s / double(patches[i].pixels.size());
    }
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        s(i, j) = std::clamp(0.3 * mean[std::size_t(i)] + 0.7 * (1 - mean[std::size_t(j)]), 0.0, 1.0);
      }
    }
    return s;
  }
};

/// Two blocks of sizes a and P - a: within-block `in`, across `out`, plus
/// symmetric Gaussian noise clamped to [0, 1].
AffinityMatrix two_block(int p, int a, double in, double out, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  AffinityMatrix m(p, p);
  for (int i = 0; i < p; ++i) {
    m(i, i) = 1.0;
    for (int j = i + 1; j < p; ++j) {
      const double base = (i < a) == (j < a) ? in : out;
      m(i, j) = m(j, i) = std::clamp(base + (sigma > 0 ? noise(rng) : 0.0), 0.0, 1.0);
    }
  }
  return m;
}

}  // namespace

TEST(PlanGrid, FourByThree) {
  const auto g = plan_grid(2048, 1536);
  EXPECT_EQ(g.cols, 25);
  EXPECT_EQ(g.rows, 18);
  EXPECT_EQ(g.size(), 450u);
  EXPECT_DOUBLE_EQ(g.stride, (2048.0 - 128.0) / 24.0);
  EXPECT_EQ(g.coords.front(), std::make_pair(0, 0));
  EXPECT_EQ(g.coords[24], std::make_pair(1920, 0));
}

TEST(PlanGrid, SinglePatch) {
  const auto g = plan_grid(128, 128);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.coords[0], std::make_pair(0, 0));
}

TEST(PlanGrid, SquareMaximum) {
  EXPECT_EQ(plan_grid(1000, 1000).size(), 625u);
  EXPECT_EQ(plan_grid(600, 1000).cols * plan_grid(600, 1000).rows,
            int(plan_grid(600, 1000).size()));
}

TEST(PlanGrid, TooSmall) {
  EXPECT_THROW(plan_grid(127, 500), TooSmallError);
}

TEST(PlanGrid, CoordinatesInsideImage) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const int w = uniform_int(rng, 128, 900);
    const int h = uniform_int(rng, 128, 900);
    const auto g = plan_grid(w, h, 128, uniform_int(rng, 2, 30));
    EXPECT_LE(g.size(), std::size_t(g.cols) * std::size_t(g.rows));
    for (const auto& [x, y] : g.coords) {
      ASSERT_GE(x, 0);
      ASSERT_GE(y, 0);
      ASSERT_LE(x + 128, w);
      ASSERT_LE(y + 128, h);
    }
  }
}

TEST(Affinity, FlatImageWithIdentityScorerIsAllOnes) {
  const auto img = testutil::flat_image(300, 200, 128);
  const auto grid = plan_grid(300, 200, 128, 6);
  const auto a = compute_affinity(img, IdentityScorer{}, grid);
  EXPECT_TRUE((a.array() == 1.0).all());
}

TEST(Affinity, SymmetricWithUnitDiagonal) {
  const auto img = testutil::noise_image(260, 190, 3);
  const auto grid = plan_grid(260, 190, 128, 5);
  const auto a = compute_affinity(img, LopsidedScorer{}, grid);
  EXPECT_EQ((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_EQ(a(i, i), 1.0);
}

TEST(ResponseMap, SinglePatchIsSelfAffinity) {
  const auto grid = plan_grid(128, 128);
  AffinityMatrix a(1, 1);
  a(0, 0) = 1.0;
  const auto m = response_map(a, grid, 0, 128, 128);
  for (double v : m.values) EXPECT_EQ(v, 1.0);
}

TEST(ResponseMap, DisjointFootprints) {
  GridPlan g;
  g.coords = {{0, 0}, {128, 0}};
  g.cols = 2;
  g.rows = 1;
  g.stride = 128;
  AffinityMatrix a(2, 2);
  a << 1, 0.2, 0.2, 1;
  const auto m = response_map(a, g, 0, 256, 128);
  EXPECT_DOUBLE_EQ(m.at(200, 50), 0.2);
  EXPECT_DOUBLE_EQ(m.at(10, 50), 1.0);
}

TEST(RenderRow, MatchesBruteForce) {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const int w = uniform_int(rng, 128, 420);
    const int h = uniform_int(rng, 128, 420);
    const auto g = plan_grid(w, h, 128, uniform_int(rng, 2, 7));
    Eigen::VectorXd row(Eigen::Index(g.size()));
    for (auto& v : row) v = uniform_real(rng);
    const auto m = render_row(row, g, w, h);
    ASSERT_EQ(m.width, w);
    ASSERT_EQ(m.height, h);
    // The short side may keep an uncovered strip; only covered pixels are
    // checked here.
    for (int y = 0; y < h; y += 7) {
      for (int x = 0; x < w; x += 5) {
        double sum = 0;
        int n = 0;
        for (std::size_t j = 0; j < g.size(); ++j) {
          const auto [px, py] = g.coords[j];
          if (x >= px && x < px + 128 && y >= py && y < py + 128) {
            sum += row[Eigen::Index(j)];
            ++n;
          }
        }
        if (n == 0) continue;
        ASSERT_NEAR(m.at(x, y), sum / n, 1e-12) << x << "," << y;
      }
    }
    EXPECT_GE(*std::min_element(m.values.begin(), m.values.end()), row.minCoeff() - 1e-12);
    EXPECT_LE(*std::max_element(m.values.begin(), m.values.end()), row.maxCoeff() + 1e-12);
  }
}

TEST(RenderRow, UncoveredPixelsCopyNearest) {
  GridPlan g;
  g.coords = {{0, 0}};
  g.cols = g.rows = 1;
  Eigen::VectorXd row(1);
  row << 0.25;
  const auto m = render_row(row, g, 200, 150);
  for (double v : m.values) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(MeanShift, IdenticalRowsFormOneMode) {
  const AffinityMatrix a = AffinityMatrix::Constant(12, 12, 0.7);
  const auto r = mean_shift(a);
  EXPECT_EQ(r.mode_sizes.size(), 1u);
  EXPECT_EQ(r.dominant_members.size(), 12u);
  for (double v : r.merged_row) EXPECT_NEAR(v, 0.7, 1e-12);
}

TEST(MeanShift, PlantedTwoBlock) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = two_block(100, 60, 0.9, 0.1, 0.05, seed);
    const auto r = mean_shift(a);
    std::set<int> members(r.dominant_members.begin(), r.dominant_members.end());
    std::set<int> found;
    for (int j = 0; j < 100; ++j) {
      if (r.merged_row[j] >= 0.5) found.insert(j);
    }
    int inter = 0;
    for (int j : found) inter += j < 60;
    const double iou = double(inter) / double(found.size() + 60 - std::size_t(inter));
    EXPECT_GE(iou, 0.95) << "seed " << seed;
    EXPECT_EQ(members.size(), 60u) << "seed " << seed;

    // The merged row is the members' mean, hence within their range.
    for (int j = 0; j < 100; j += 9) {
      double lo = 1, hi = 0;
      for (int i : members) {
        lo = std::min(lo, a(i, j));
        hi = std::max(hi, a(i, j));
      }
      EXPECT_GE(r.merged_row[j], lo - 1e-12);
      EXPECT_LE(r.merged_row[j], hi + 1e-12);
    }
  }
}

TEST(MeanShift, FixedBandwidthIsUsed) {
  MeanShiftOptions opt;
  opt.bandwidth = 0.3;
  EXPECT_EQ(mean_shift(two_block(20, 12, 0.9, 0.1, 0.0, 1), opt).bandwidth, 0.3);
}

TEST(Ncuts, ExactBlocks) {
  const auto r = segment_ncuts(two_block(30, 18, 1.0, 0.0, 0.0, 0));
  for (int i = 0; i < 30; ++i) EXPECT_EQ(r.labels[std::size_t(i)], r.labels[0] ^ (i >= 18));
}

TEST(Ncuts, NoisyBlocks) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = segment_ncuts(two_block(100, 60, 0.9, 0.1, 0.05, seed));
    int agree = 0;
    for (int i = 0; i < 100; ++i) agree += r.labels[std::size_t(i)] == (i >= 60 ? 1 : 0);
    EXPECT_GE(std::max(agree, 100 - agree), 95) << "seed " << seed;
  }
}

TEST(Ncuts, ConstantIsDegenerate) {
  const auto r = segment_ncuts(AffinityMatrix::Ones(10, 10));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.labels, segment_ncuts(AffinityMatrix::Ones(10, 10)).labels);
}

TEST(Ncuts, IsolatedPatch) {
  auto a = two_block(10, 5, 0.9, 0.2, 0.0, 0);
  a.row(7).setZero();
  a.col(7).setZero();
  a(7, 7) = 1;
  EXPECT_EQ(segment_ncuts(a).labels[7], 1);
}

TEST(SpliceMask, MinorityBelowThreshold) {
  FloatMap m(10, 10);
  std::fill(m.values.begin(), m.values.end(), 0.9);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 10; ++x) m.at(x, y) = 0.1;
  }
  const auto r = splice_mask(m);
  EXPECT_FALSE(r.no_candidate);
  EXPECT_TRUE(r.splice_is_low);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) EXPECT_EQ(r.mask.at(x, y), y < 3);
  }
}

TEST(SpliceMask, ConstantMapIsFlagged) {
  FloatMap m(8, 8);
  std::fill(m.values.begin(), m.values.end(), 0.7);
  const auto r = splice_mask(m);
  EXPECT_TRUE(r.no_candidate);
  EXPECT_EQ(std::count(r.mask.bits.begin(), r.mask.bits.end(), 1), 0);
}

TEST(SpliceMask, TieGoesToLowSide) {
  FloatMap m(4, 1);
  m.values = {0.9, 0.2, 0.8, 0.1};
  const auto r = splice_mask(m);
  EXPECT_TRUE(r.splice_is_low);
  EXPECT_EQ(r.mask.bits, (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(DetectionScore, Orientation) {
  FloatMap ones(5, 5), zeros(5, 5);
  std::fill(ones.values.begin(), ones.values.end(), 1.0);
  EXPECT_EQ(detection_score(ones), 0.0);
  EXPECT_EQ(detection_score(zeros), 1.0);
}

TEST(Localize, Deterministic) {
  const auto img = testutil::noise_image(300, 220, 9);
  LocalizerOptions opt;
  opt.n_longest = 5;
  const auto a = localize(img, LopsidedScorer{}, opt);
  const auto b = localize(img, LopsidedScorer{}, opt);
  EXPECT_EQ(a.affinity, b.affinity);
  EXPECT_EQ(a.consistency.values, b.consistency.values);
  EXPECT_EQ(a.mask.mask.bits, b.mask.mask.bits);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.ncut.labels, b.ncut.labels);
  EXPECT_EQ(a.consistency.width, 300);
  EXPECT_EQ(a.consistency.height, 220);
}

TEST(Localize, WritesOutputs) {
  testutil::TempDir dir;
  LocalizerOptions opt;
  opt.n_longest = 3;
  const auto r = localize(testutil::noise_image(200, 150, 2), LopsidedScorer{}, opt);
  write_splice_result(dir.path(), "img", r, true);
  for (const char* f : {"img.consistency.png", "img.mask.png", "img.json", "img.affinity.f32",
                        "img.affinity.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "img.affinity.f32"),
            sizeof(float) * r.grid.size() * r.grid.size());
}
