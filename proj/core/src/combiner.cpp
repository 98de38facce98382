#include "exifcons/combiner.hpp"

#include <algorithm>

#include "exifcons/errors.hpp"

namespace exifcons {

using nn::Matrix;

namespace {

constexpr std::uint64_t kCombinerInitStream = 20;
constexpr std::uint64_t kCombinerTrainStream = 21;
constexpr std::uint64_t kPoolStream = 22;

}  // namespace

Combiner::Combiner(int input_dim, int hidden, std::uint64_t seed)
    : fc1_("combiner.fc1", input_dim, hidden),
      relu_(nn::Shape{hidden, 1, 1}),
      fc2_("combiner.fc2", hidden, 1) {
  if (input_dim <= 0 || hidden <= 0) throw InputError("combiner sizes must be positive");
  Rng rng(derive_seed(seed, kCombinerInitStream, 0));
  fc1_.init_he(rng);
  fc2_.init_he(rng);
}

Matrix<float> Combiner::logits(const Matrix<float>& probs) const {
  if (probs.cols() != input_dim()) {
    throw InputError("combiner expects " + std::to_string(input_dim()) + " inputs, got " +
                     std::to_string(probs.cols()));
  }
  Matrix<float> h, r, out;
  fc1_.infer(probs, h);
  relu_.infer(h, r);
  fc2_.infer(r, out);
  return out;
}

std::vector<double> Combiner::predict(const Matrix<float>& probs) const {
  const auto l = logits(probs);
  std::vector<double> out(std::size_t(l.rows()));
  for (Eigen::Index i = 0; i < l.rows(); ++i) out[std::size_t(i)] = sigmoid(l(i, 0));
  return out;
}

double Combiner::overall_consistency(std::span<const float> probs) const {
  Matrix<float> m(1, Eigen::Index(probs.size()));
  for (std::size_t k = 0; k < probs.size(); ++k) m(0, Eigen::Index(k)) = probs[k];
  return predict(m)[0];
}

Matrix<float> Combiner::train_forward(const Matrix<float>& probs) {
  Matrix<float> out;
  fc1_.forward(probs, h_pre_);
  relu_.forward(h_pre_, h_);
  fc2_.forward(h_, out);
  return out;
}

void Combiner::train_backward(const Matrix<float>& grad_logits) {
  Matrix<float> dh, dpre;
  fc2_.backward(grad_logits, &dh);
  relu_.backward(dh, &dpre);
  fc1_.backward(dpre, nullptr);
}

std::vector<nn::Param<float>*> Combiner::parameters() {
  std::vector<nn::Param<float>*> out;
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

std::vector<const nn::Param<float>*> Combiner::parameters() const {
  auto ps = const_cast<Combiner*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void Combiner::zero() {
  for (auto* p : parameters()) p->value.setZero();
}

void fill_masked(Matrix<float>& probs, const Matrix<float>& mask) {
  if (probs.rows() != mask.rows() || probs.cols() != mask.cols()) {
    throw InputError("mask shape does not match the consistency vectors");
  }
  probs = (mask.array() == 0.0f).select(0.5f, probs);
}

Combiner train_combiner_on(const std::function<CombinerBatch(Rng&, int)>& sampler,
                           int input_dim, const CombinerOptions& options) {
  Combiner model(input_dim, options.hidden, options.seed);
  nn::Adam<float> optimizer(model.parameters(), options.learning_rate);
  for (int it = 0; it < options.iterations; ++it) {
    Rng rng = make_rng(options.seed, kCombinerTrainStream, std::uint64_t(it));
    const auto batch = sampler(rng, options.batch_size);
    Matrix<float> y(Eigen::Index(batch.targets.size()), 1);
    for (std::size_t i = 0; i < batch.targets.size(); ++i) y(Eigen::Index(i), 0) = batch.targets[i];
    const Matrix<float> mask = Matrix<float>::Ones(y.rows(), 1);
    const auto out = model.train_forward(batch.inputs);
    const auto loss = masked_bce(out, y, mask);
    optimizer.zero_grad();
    model.train_backward(loss.grad.cast<float>());
    optimizer.step();
    if (options.on_step) options.on_step(it + 1, loss.loss);
  }
  return model;
}

CropPool build_crop_pool(const ConsistencyNet<float>& net, const CorpusIndex& index,
                         PhotoStore& store, int crops_per_photo, std::uint64_t seed,
                         int workers) {
  if (index.photo_ids.size() < 2) {
    throw UnsatisfiableError("combiner training needs at least 2 photos, corpus has " +
                             std::to_string(index.photo_ids.size()));
  }
  if (crops_per_photo < 2) throw InputError("need at least two crops per photo");
  CropPool pool;
  pool.photo_ids = index.photo_ids;
  const std::size_t n = pool.photo_ids.size();
  std::vector<std::vector<Patch>> crops(n);
  parallel_for(n, workers, [&](std::size_t k) {
    const auto& rec = index.record(pool.photo_ids[k]);
    auto img = store.get(rec);
    Rng rng = make_rng(seed, kPoolStream, k);
    const long positions =
        long(img->width - kPatchSize + 1) * long(img->height - kPatchSize + 1);
    if (positions < 2) {
      throw UnsatisfiableError("photo " + rec.photo_id + " admits a single crop");
    }
    const int want = int(std::min<long>(crops_per_photo, positions));
    auto& out = crops[k];
    while (int(out.size()) < want) {
      Patch p = sample_patch(*img, rec.photo_id, rng);
      const bool dup = std::any_of(out.begin(), out.end(),
                                   [&](const Patch& q) { return q.x == p.x && q.y == p.y; });
      if (!dup) out.push_back(std::move(p));
    }
  });
  std::vector<const Patch*> all;
  pool.offsets.push_back(0);
  for (const auto& c : crops) {
    for (const auto& p : c) all.push_back(&p);
    pool.offsets.push_back(int(all.size()));
  }
  pool.embeddings = net.embed(patches_to_matrix<float>(std::span<const Patch* const>(all)));
  return pool;
}

CombinerBatch sample_combiner_batch(const ConsistencyNet<float>& net, const CropPool& pool,
                                    int batch_size, Rng& rng) {
  if (batch_size < 2) throw InputError("combiner batch size must be at least 2");
  const int photos = int(pool.photo_ids.size());
  std::vector<std::pair<int, int>> pairs;
  CombinerBatch batch;
  const int same = (batch_size + 1) / 2;
  for (int i = 0; i < batch_size; ++i) {
    if (i < same) {
      const int k = uniform_int(rng, 0, photos - 1);
      const int lo = pool.offsets[std::size_t(k)];
      const int count = pool.offsets[std::size_t(k) + 1] - lo;
      const int a = uniform_int(rng, 0, count - 1);
      int b = uniform_int(rng, 0, count - 2);
      if (b >= a) ++b;
      pairs.emplace_back(lo + a, lo + b);
      batch.targets.push_back(1.0f);
    } else {
      const int k = uniform_int(rng, 0, photos - 1);
      int m = uniform_int(rng, 0, photos - 2);
      if (m >= k) ++m;
      auto crop = [&](int photo) {
        const int lo = pool.offsets[std::size_t(photo)];
        return lo + uniform_int(rng, 0, pool.offsets[std::size_t(photo) + 1] - lo - 1);
      };
      const int a = crop(k);
      const int b = crop(m);
      pairs.emplace_back(a, b);
      batch.targets.push_back(0.0f);
    }
  }
  const auto logits = net.pair_logits_indexed(pool.embeddings, pairs);
  batch.inputs = logits.unaryExpr([](float v) { return float(sigmoid(v)); });
  return batch;
}

Combiner train_combiner(const ConsistencyNet<float>& net, const CorpusIndex& index,
                        PhotoStore& store, const CombinerOptions& options, int workers) {
  const auto pool = build_crop_pool(net, index, store, options.crops_per_photo, options.seed,
                                    workers);
  return train_combiner_on(
      [&](Rng& rng, int b) { return sample_combiner_batch(net, pool, b, rng); },
      net.config().output_dim, options);
}

}  // namespace exifcons
