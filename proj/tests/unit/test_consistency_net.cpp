#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "exifcons/consistency_net.hpp"
#include "exifcons/errors.hpp"
#include "oracles.hpp"
#include "unit/test_util.hpp"

using namespace exifcons;
using nn::Matrix;

namespace {

ModelConfig tiny_config(int output_dim) {
  ModelConfig c;
  c.conv_channels = {8, 16, 16};
  c.conv_strides = {4, 4, 2};
  c.embedding_dim = 32;
  c.head_widths = {32};
  c.output_dim = output_dim;
  return c;
}

Patch random_patch(Rng& rng) {
  Patch p;
  for (auto& v : p.pixels) v = float(uniform_real(rng));
  return p;
}

template <typename T>
Matrix<T> random_patches(int n, Rng& rng) {
  std::vector<Patch> ps;
  for (int i = 0; i < n; ++i) ps.push_back(random_patch(rng));
  return patches_to_matrix<T>(std::span<const Patch>(ps));
}

/// Photos whose pixels are dark or bright; "Sig" records which.
struct PlantedCorpus {
  std::vector<PhotoRecord> records;
  AttributeVocabulary vocab;
  CorpusIndex index;
  PhotoStore store;
};

void plant(PlantedCorpus& c, int n, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    PhotoRecord r;
    r.photo_id = "s" + std::to_string(seed) + "_" + std::to_string(i);
    // Pixel noise amplitude carries the attribute.
    const bool rough = i % 2 == 0;
    r.attributes["Sig"] = rough ? "rough" : "smooth";
    // Independent of the pixels.
    r.attributes["Noise"] = coin(rng, 0.5) ? "u" : "v";
    ImageU8 img(160, 160);
    for (auto& v : img.rgb) {
      v = std::uint8_t(rough ? uniform_int(rng, 28, 228) : uniform_int(rng, 118, 138));
    }
    c.store.add(r.photo_id, std::move(img));
    c.records.push_back(r);
  }
  c.vocab = build_vocabulary(c.records, 1, 1);
  c.index = index_corpus(c.records, c.vocab);
}

std::optional<double> accuracy_of(const std::vector<AttributeAccuracy>& accs,
                                  const std::string& attr) {
  for (const auto& a : accs) {
    if (a.attribute == attr) return a.accuracy;
  }
  return std::nullopt;
}

}  // namespace

TEST(ConsistencyNet, OutputsAreProbabilities) {
  ModelConfig cfg;
  cfg.output_dim = 11;
  ConsistencyNet<float> net(cfg, 3);
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    const auto p = forward(net, random_patch(rng), random_patch(rng));
    ASSERT_EQ(p.size(), 11u);
    for (float v : p) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  Patch black, white;
  std::fill(white.pixels.begin(), white.pixels.end(), 1.0f);
  for (float v : forward(net, black, white)) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(ConsistencyNet, ZeroedOutputLayerGivesHalf) {
  ConsistencyNet<float> net(tiny_config(7), 1);
  net.zero_output_layer();
  Rng rng(2);
  for (float v : forward(net, random_patch(rng), random_patch(rng))) EXPECT_EQ(v, 0.5f);
}

TEST(ConsistencyNet, SharedEncoder) {
  ConsistencyNet<float> net(tiny_config(3), 1);
  Rng rng(5);
  const auto p = random_patch(rng);
  const Patch* both[] = {&p, &p};
  const auto x = patches_to_matrix<float>(std::span<const Patch* const>(both));
  const auto e = net.embed(x);
  EXPECT_EQ(e.row(0), e.row(1));
}

TEST(ConsistencyNet, IndexedPairsMatchDirectPairs) {
  ConsistencyNet<double> net(tiny_config(4), 8);
  Rng rng(9);
  const auto x = random_patches<double>(3, rng);
  const auto e = net.embed(x);
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 0}, {1, 1}};
  const auto indexed = net.pair_logits_indexed(e, pairs);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Matrix<double> ea = e.row(pairs[k].first);
    const Matrix<double> eb = e.row(pairs[k].second);
    const auto direct = net.pair_logits(ea, eb);
    for (Eigen::Index j = 0; j < direct.cols(); ++j) {
      EXPECT_NEAR(indexed(Eigen::Index(k), j), direct(0, j), 1e-12);
    }
  }
}

TEST(MaskedBce, AllHalfIsLn2) {
  Matrix<double> logits = Matrix<double>::Zero(4, 5);
  Matrix<double> y = Matrix<double>::Zero(4, 5);
  Matrix<double> mask = Matrix<double>::Ones(4, 5);
  y(0, 0) = y(2, 3) = 1;
  mask(1, 1) = 0;
  EXPECT_NEAR(masked_bce(logits, y, mask).loss, std::log(2.0), 1e-12);
}

TEST(MaskedBce, PerfectPredictionsHitTheClip) {
  Matrix<double> y(2, 2);
  y << 1, 0, 0, 1;
  const Matrix<double> logits = (y.array() * 2 - 1) * 50.0;
  const Matrix<double> mask = Matrix<double>::Ones(2, 2);
  const double loss = masked_bce(logits, y, mask).loss;
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, 1.2e-7);
}

TEST(MaskedBce, MaskedEntriesIgnored) {
  Matrix<double> logits(1, 3);
  logits << 0.3, -7.0, 2.0;
  Matrix<double> y(1, 3);
  y << 1, 1, 0;
  Matrix<double> mask(1, 3);
  mask << 1, 0, 1;
  const auto r = masked_bce(logits, y, mask);
  const double expected =
      0.5 * (-std::log(sigmoid(0.3)) - std::log(1.0 - sigmoid(2.0)));
  EXPECT_NEAR(r.loss, expected, 1e-12);
  EXPECT_EQ(r.grad(0, 1), 0.0);
}

TEST(MaskedBce, DegenerateBatch) {
  const Matrix<double> z = Matrix<double>::Zero(2, 3);
  EXPECT_THROW(masked_bce(z, z, z), DegenerateBatchError);
}

// Central differences in double precision on the default small backbone.
TEST(ConsistencyNet, GradientCheck) {
  ModelConfig cfg;
  cfg.output_dim = 6;
  ConsistencyNet<double> net(cfg, 11);
  Rng rng(12);
  const auto a = random_patches<double>(2, rng);
  const auto b = random_patches<double>(2, rng);
  Matrix<double> y(2, 6), mask(2, 6);
  y << 1, 0, 1, 1, 0, 0,  //
      0, 0, 1, 0, 1, 1;
  mask << 1, 1, 0, 1, 1, 1,  //
      1, 0, 1, 1, 1, 0;

  auto params = net.parameters();
  for (auto* p : params) p->grad.setZero();
  const auto logits = net.train_forward(a, b);
  const auto loss = masked_bce(logits, y, mask);
  net.train_backward(loss.grad);

  auto loss_at = [&] { return masked_bce(net.train_forward(a, b), y, mask).loss; };
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    auto* p = params[std::size_t(uniform_int(rng, 0, int(params.size()) - 1))];
    const auto i = Eigen::Index(uniform_int(rng, 0, int(p->value.size()) - 1));
    const double numeric = oracle::central_difference(loss_at, p->value.data()[i]);
    const double analytic = p->grad.data()[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double rel = std::abs(numeric - analytic) / denom;
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-3) << p->name << "[" << i << "] analytic " << analytic << " numeric "
                         << numeric;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));

  // The output layer's weight rows for a slot only see that slot's logit
  // gradient, so a slot masked for every pair gets no gradient at all.
  Matrix<double> column_masked = mask;
  column_masked.col(4).setZero();
  for (auto* p : params) p->grad.setZero();
  net.train_backward(masked_bce(net.train_forward(a, b), y, column_masked).grad);
  const auto* out_w = params[params.size() - 2];
  const auto* out_b = params[params.size() - 1];
  ASSERT_EQ(out_w->value.rows(), 6);
  EXPECT_TRUE((out_w->grad.row(4).array() == 0.0).all());
  EXPECT_EQ(out_b->grad(0, 4), 0.0);
  EXPECT_FALSE((out_w->grad.row(3).array() == 0.0).all());
}

TEST(ConsistencyNet, OverfitsOneBatch) {
  ConsistencyNet<float> net(tiny_config(5), 21);
  Rng rng(22);
  const auto a = random_patches<float>(8, rng);
  const auto b = random_patches<float>(8, rng);
  Matrix<float> y(8, 5), mask = Matrix<float>::Ones(8, 5);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = float(uniform_int(rng, 0, 1));
  mask(0, 0) = mask(3, 2) = 0;
  nn::Adam<float> opt(net.parameters(), 3e-3);
  double loss = 1;
  for (int step = 0; step < 500 && loss >= 0.05; ++step) {
    opt.zero_grad();
    const auto r = masked_bce(net.train_forward(a, b), y, mask);
    net.train_backward(r.grad.cast<float>());
    opt.step();
    loss = masked_bce(net.train_forward(a, b), y, mask).loss;
  }
  EXPECT_LT(loss, 0.05);
}

TEST(ConsistencyNet, ZeroIterationsKeepsInit) {
  PlantedCorpus c;
  plant(c, 8, 1);
  ConsistencyNet<float> net(tiny_config(int(label_dim(c.vocab))), 4);
  ConsistencyNet<float> fresh(tiny_config(int(label_dim(c.vocab))), 4);
  TrainOptions opt;
  opt.iterations = 0;
  const auto state = train(net, opt, c.index, c.vocab, c.store);
  EXPECT_EQ(state.step, 0);
  const auto pa = net.parameters();
  const auto pb = fresh.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

TEST(ConsistencyNet, FullScaleDefaults) {
  const auto c = ModelConfig::full_scale(83);
  EXPECT_EQ(c.backbone, Backbone::kFull);
  EXPECT_EQ(c.embedding_dim, 4096);
  EXPECT_EQ(c.head_widths, (std::vector<int>{4096, 2048, 1024}));
  EXPECT_EQ(c.output_dim, 83);
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_EQ(ModelConfig{}.output_dim, 83);
}

TEST(ConsistencyNet, ConfigValidation) {
  auto c = tiny_config(3);
  c.conv_strides.pop_back();
  EXPECT_THROW(c.validate(), InputError);
  auto d = tiny_config(3);
  d.objective = Objective::kImage;
  EXPECT_THROW(d.validate(), InputError);
  EXPECT_THROW(parse_objective("z"), InputError);
}

TEST(ConsistencyNet, CameraVariantIsADistribution) {
  auto cfg = tiny_config(4);
  cfg.objective = Objective::kCamera;
  ConsistencyNet<float> net(cfg, 2);
  Rng rng(3);
  const auto p = random_patch(rng);
  const Patch* one[] = {&p};
  const auto probs = forward_variant(net, one);
  ASSERT_EQ(probs.size(), 4u);
  double sum = 0;
  for (double v : probs) {
    EXPECT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  const Patch* two[] = {&p, &p};
  EXPECT_THROW(forward_variant(net, two), InputError);
}

// Balanced order task: the same pairs shown both ways. Each pair scores
// 0, 1 or 2, so 2000 pairs keep the sampling sd under 0.011.
TEST(ConsistencyNet, UntrainedOrderVariantIsChance) {
  auto cfg = tiny_config(1);
  cfg.objective = Objective::kX;
  ConsistencyNet<float> net(cfg, 5);
  Rng rng(6);
  int correct = 0, total = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto l = random_patch(rng);
    const auto r = random_patch(rng);
    const Patch* fwd[] = {&l, &r};
    const Patch* rev[] = {&r, &l};
    correct += forward_variant(net, fwd)[0] >= 0.5;
    correct += forward_variant(net, rev)[0] < 0.5;
    total += 2;
  }
  EXPECT_NEAR(double(correct) / total, 0.5, 0.02);
}

TEST(AttributeAccuracy, UntrainedIsChance) {
  PlantedCorpus c;
  plant(c, 40, 2);
  ConsistencyNet<float> net(tiny_config(int(label_dim(c.vocab))), 7);
  const auto accs = evaluate_attribute_accuracy(net, c.index, c.vocab, c.store, 400, 1);
  ASSERT_EQ(accs.size(), c.vocab.size());
  for (const auto& a : accs) {
    ASSERT_TRUE(a.accuracy.has_value()) << a.attribute;
    EXPECT_EQ(a.pairs, 400);
    EXPECT_NEAR(*a.accuracy, 0.5, 0.03) << a.attribute;
  }
}

TEST(AttributeAccuracy, PlantedAttributeIsLearned) {
  PlantedCorpus train_set, heldout;
  plant(train_set, 40, 3);
  plant(heldout, 20, 4);
  heldout.vocab = train_set.vocab;
  heldout.index = index_corpus(heldout.records, heldout.vocab);

  ConsistencyNet<float> net(tiny_config(int(label_dim(train_set.vocab))), 8);
  TrainOptions opt;
  opt.iterations = 300;
  opt.batch_size = 16;
  opt.learning_rate = 2e-3;
  opt.seed = 9;
  opt.augmentation.enabled = false;
  train(net, opt, train_set.index, train_set.vocab, train_set.store);

  const auto accs =
      evaluate_attribute_accuracy(net, heldout.index, heldout.vocab, heldout.store, 200, 5);
  const auto sig = accuracy_of(accs, "Sig");
  ASSERT_TRUE(sig.has_value());
  EXPECT_GE(*sig, 0.95);
}
