#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exifcons/augment.hpp"
#include "exifcons/image.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/nn.hpp"
#include "exifcons/pair_sampler.hpp"

namespace exifcons {

enum class Backbone { kSmall, kFull };
enum class Objective { kExif, kImage, kCamera, kX, kY };

std::string to_string(Backbone b);
std::string to_string(Objective o);
Backbone parse_backbone(const std::string& s);
Objective parse_objective(const std::string& s);

struct ModelConfig {
  Backbone backbone = Backbone::kSmall;
  /// Small backbone only: 3x3 conv widths and strides, one entry per layer.
  std::vector<int> conv_channels{16, 32, 64, 64, 128, 128, 256, 256};
  std::vector<int> conv_strides{2, 2, 2, 2, 2, 1, 2, 1};
  /// Gain of a fixed 3x3 high-pass filter in front of the encoder; 0 feeds
  /// raw pixels.
  double input_highpass = 20.0;
  int embedding_dim = 256;
  std::vector<int> head_widths{256, 128, 64};
  int output_dim = 83;
  Objective objective = Objective::kExif;
  /// Scale of the output layer's initial weights relative to He init.
  double output_init_gain = 0.1;

  /// 50-layer residual encoder, 4096-d embedding, [4096, 2048, 1024] head.
  static ModelConfig full_scale(int output_dim);
  /// Throws InputError when the fields are inconsistent.
  void validate() const;
  bool pair_input() const { return objective != Objective::kCamera; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// Stacks patches into an N x (3*128*128) batch, centered to [-0.5, 0.5].
template <typename T>
nn::Matrix<T> patches_to_matrix(std::span<const Patch* const> patches);
template <typename T>
nn::Matrix<T> patches_to_matrix(std::span<const Patch> patches);

/// Labels and validity masks as dense matrices (N x label_dim).
template <typename T>
struct LabelMatrices {
  nn::Matrix<T> y;
  nn::Matrix<T> mask;
};

template <typename T>
LabelMatrices<T> labels_to_matrices(std::span<const PairLabel> labels);

struct LossResult {
  double loss = 0.0;
  nn::Matrix<double> grad;  // dL/dlogits
};

inline constexpr double kProbabilityClip = 1e-7;

/// Sum over valid (pair, slot) entries of binary cross-entropy on clipped
/// sigmoid probabilities, divided by the number of valid entries. Throws
/// DegenerateBatchError when no entry is valid.
template <typename T>
LossResult masked_bce(const nn::Matrix<T>& logits, const nn::Matrix<T>& y,
                      const nn::Matrix<T>& mask);

/// Mean softmax cross-entropy.
template <typename T>
LossResult softmax_cross_entropy(const nn::Matrix<T>& logits, std::span<const int> classes);

double sigmoid(double x);

/// Shared-weight patch encoder followed by an MLP head. Pair objectives
/// feed the head [E(a), E(b)]; the camera objective feeds E(a) alone.
template <typename T>
class ConsistencyNet {
 public:
  ConsistencyNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<nn::Param<T>*> parameters();
  std::vector<const nn::Param<T>*> parameters() const;
  void zero_output_layer();

  /// Inference. `x` rows are patches from patches_to_matrix.
  nn::Matrix<T> embed(const nn::Matrix<T>& x) const;
  nn::Matrix<T> head_logits(const nn::Matrix<T>& head_input) const;
  /// Logits for pairs (a_i, b_i) given their embeddings.
  nn::Matrix<T> pair_logits(const nn::Matrix<T>& ea, const nn::Matrix<T>& eb) const;
  /// Logits for the listed (row, row) pairs of one embedding matrix. The
  /// first head layer is split so its cost is paid once per patch.
  nn::Matrix<T> pair_logits_indexed(const nn::Matrix<T>& embeddings,
                                    std::span<const std::pair<int, int>> pairs) const;

  /// Training forward/backward. For pair objectives `a` and `b` hold the two
  /// sides; for the camera objective `b` is ignored.
  nn::Matrix<T> train_forward(const nn::Matrix<T>& a, const nn::Matrix<T>& b);
  void train_backward(const nn::Matrix<T>& grad_logits);

 private:
  ModelConfig config_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> head_;
  std::vector<nn::Linear<T>*> head_linears_;
  Eigen::Index batch_ = 0;
};

/// Per-pair exif consistency probabilities (label_dim entries each).
std::vector<float> forward(const ConsistencyNet<float>& net, const Patch& a, const Patch& b);

/// image/x/y: one probability from an ordered pair; camera: a distribution
/// over camera classes from one patch; exif: the consistency vector.
std::vector<double> forward_variant(const ConsistencyNet<float>& net,
                                    std::span<const Patch* const> inputs);

struct TrainOptions {
  int iterations = 1'000'000;
  int batch_size = 128;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  int workers = 1;
  AugmentationParams augmentation;
  /// Attribute whose values are the camera classes.
  std::string camera_attribute = "Image Model";
  /// Called after each optimizer step.
  std::function<void(int step, double loss)> on_step;
};

struct TrainState {
  int step = 0;
  double last_loss = 0.0;
};

/// One optimizer update on a metadata pair batch; returns the loss.
double train_step(ConsistencyNet<float>& net, const PairBatch& batch,
                  nn::Adam<float>& optimizer);

/// Runs options.iterations updates of the model's objective. Batch i is a
/// pure function of (seed, i).
TrainState train(ConsistencyNet<float>& net, const TrainOptions& options,
                 const CorpusIndex& index, const AttributeVocabulary& vocab,
                 PhotoStore& store);

struct AttributeAccuracy {
  std::string attribute;
  std::optional<double> accuracy;  // empty when no eval pairs exist
  int pairs = 0;
};

/// Pairwise-rebalanced accuracy per attribute, thresholding at 0.5. Pairs
/// are built without post-processing.
std::vector<AttributeAccuracy> evaluate_attribute_accuracy(
    const ConsistencyNet<float>& net, const CorpusIndex& heldout,
    const AttributeVocabulary& vocab, PhotoStore& store, int pairs_per_attribute,
    std::uint64_t seed, int workers = 1);

}  // namespace exifcons
