#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exifcons/augment.hpp"
#include "exifcons/image.hpp"
#include "exifcons/metadata.hpp"
#include "exifcons/rng.hpp"

namespace exifcons {

/// Decoded-pixel cache keyed by photo id. Photos are loaded from their
/// record path on first use unless registered in memory. Thread-safe.
class PhotoStore {
 public:
  PhotoStore() = default;
  PhotoStore(const PhotoStore&) = delete;
  PhotoStore& operator=(const PhotoStore&) = delete;

  void add(const std::string& photo_id, ImageU8 image);
  std::shared_ptr<const ImageU8> get(const PhotoRecord& record);

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const ImageU8>> cache_;
};

/// Uniform crop over every valid top-left position.
Patch sample_patch(const ImageU8& image, const std::string& photo_id, Rng& rng);

/// Metadata part of a pair label plus the three post-processing slots.
/// Slot layout: [0, n) vocabulary attributes, n = rejpeg, n+1 = blur,
/// n+2 = resize, where n is the vocabulary size.
struct PairLabel {
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> mask;
};

inline std::size_t label_dim(const AttributeVocabulary& vocab) { return vocab.size() + 3; }

/// Metadata slots only (size n): valid where both records carry an
/// admissible value, positive where the two values are byte-equal.
PairLabel label_pair(const PhotoRecord& a, const PhotoRecord& b,
                     const AttributeVocabulary& vocab);

/// Which photos to pair, before any pixels are touched.
struct PairPlan {
  std::size_t attribute = 0;
  std::string value;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::uint8_t> shares_value;
};

/// Attributes with at least one value shared by two photos and at least one
/// photo carrying a different admissible value.
std::vector<std::size_t> eligible_attributes(const CorpusIndex& index,
                                             const AttributeVocabulary& vocab);

/// Balanced attribute uniform over eligible attributes (or `force_attribute`),
/// balanced value uniform over its eligible values; ceil(B/2) pairs share it
/// and floor(B/2) do not.
PairPlan plan_pair_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                         int batch_size, Rng& rng,
                         std::optional<std::size_t> force_attribute = std::nullopt);

struct PairBatch {
  std::vector<std::pair<Patch, Patch>> pairs;
  std::vector<PairLabel> labels;  // full label_dim entries
  std::string balanced_attribute;
  std::string balanced_value;
  std::vector<std::uint8_t> shares_value;
};

/// Crops, augments and labels a plan. Each pair uses its own generator
/// seeded from `rng`, so `workers` only changes speed, never output.
PairBatch materialize(const PairPlan& plan, const CorpusIndex& index,
                      const AttributeVocabulary& vocab, PhotoStore& store,
                      const AugmentationParams& aug, Rng& rng, int workers = 1);

PairBatch make_pair_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                          int batch_size, PhotoStore& store,
                          const AugmentationParams& aug, Rng& rng, int workers = 1);

/// Pairs with one scalar target, for the same-image and spatial-order tasks.
struct TargetBatch {
  std::vector<std::pair<Patch, Patch>> pairs;
  std::vector<float> targets;
};

/// Half same-photo pairs (two distinct crops, target 1), half cross-photo.
TargetBatch make_image_batch(const CorpusIndex& index, PhotoStore& store,
                             int batch_size, const AugmentationParams& aug, Rng& rng);

enum class Axis { kX, kY };

/// Two crops of one photo at distinct coordinates along `axis`; target 1 when
/// presented in true order (left before right, top before bottom).
TargetBatch make_order_batch(const CorpusIndex& index, PhotoStore& store,
                             int batch_size, Axis axis, const AugmentationParams& aug,
                             Rng& rng);

/// Single patches labeled by camera class (index into the vocabulary values
/// of `camera_attribute`), camera chosen uniformly per sample.
struct ClassBatch {
  std::vector<Patch> patches;
  std::vector<int> classes;
};

ClassBatch make_camera_batch(const CorpusIndex& index, const AttributeVocabulary& vocab,
                             const std::string& camera_attribute, PhotoStore& store,
                             int batch_size, const AugmentationParams& aug, Rng& rng);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace exifcons
