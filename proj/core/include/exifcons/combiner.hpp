#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "exifcons/augment.hpp"
#include "exifcons/consistency_net.hpp"
#include "exifcons/nn.hpp"

namespace exifcons {

/// Two-layer perceptron mapping a consistency vector to the probability that
/// both patches come from the same image.
class Combiner {
 public:
  Combiner(int input_dim, int hidden, std::uint64_t seed);

  int input_dim() const { return int(fc1_.weight.value.cols()); }
  int hidden() const { return int(fc1_.weight.value.rows()); }

  double overall_consistency(std::span<const float> probs) const;
  /// Row-wise probabilities for an N x input_dim matrix.
  std::vector<double> predict(const nn::Matrix<float>& probs) const;
  nn::Matrix<float> logits(const nn::Matrix<float>& probs) const;

  nn::Matrix<float> train_forward(const nn::Matrix<float>& probs);
  void train_backward(const nn::Matrix<float>& grad_logits);
  std::vector<nn::Param<float>*> parameters();
  std::vector<const nn::Param<float>*> parameters() const;
  void zero();

 private:
  nn::Linear<float> fc1_;
  nn::ReLU<float> relu_;
  nn::Linear<float> fc2_;
  nn::Matrix<float> h_pre_, h_;
};

/// Replaces masked slots (mask 0) with the uninformative value 0.5.
void fill_masked(nn::Matrix<float>& probs, const nn::Matrix<float>& mask);

struct CombinerBatch {
  nn::Matrix<float> inputs;   // N x input_dim
  std::vector<float> targets;  // 1 = same image
};

struct CombinerOptions {
  int iterations = 10'000;
  int batch_size = 128;
  double learning_rate = 1e-4;
  int hidden = 512;
  /// Crops per photo in the frozen-embedding pool.
  int crops_per_photo = 8;
  std::uint64_t seed = 0;
  std::function<void(int step, double loss)> on_step;
};

/// Trains on batches drawn from `sampler(rng, batch_size)`; batch i uses a
/// generator derived from (seed, i).
Combiner train_combiner_on(const std::function<CombinerBatch(Rng&, int)>& sampler,
                           int input_dim, const CombinerOptions& options);

/// Embedding pool for combiner training: crops_per_photo distinct crops of
/// every photo, embedded once by the frozen network.
struct CropPool {
  std::vector<std::string> photo_ids;
  /// Row range [offsets[k], offsets[k+1]) of embeddings belongs to photo k.
  std::vector<int> offsets;
  nn::Matrix<float> embeddings;
};

CropPool build_crop_pool(const ConsistencyNet<float>& net, const CorpusIndex& index,
                         PhotoStore& store, int crops_per_photo, std::uint64_t seed,
                         int workers = 1);

/// Balanced same-image / different-image batch from the pool: ceil(B/2)
/// pairs of two distinct crops of one photo, floor(B/2) cross-photo pairs.
/// Inputs are the frozen network's consistency probabilities.
CombinerBatch sample_combiner_batch(const ConsistencyNet<float>& net, const CropPool& pool,
                                    int batch_size, Rng& rng);

/// Freezes `net` (it is only read) and trains a combiner on its outputs.
Combiner train_combiner(const ConsistencyNet<float>& net, const CorpusIndex& index,
                        PhotoStore& store, const CombinerOptions& options, int workers = 1);

}  // namespace exifcons
