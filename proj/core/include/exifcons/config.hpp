#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "exifcons/augment.hpp"
#include "exifcons/combiner.hpp"
#include "exifcons/consistency_net.hpp"
#include "exifcons/evaluator.hpp"
#include "exifcons/localizer.hpp"

namespace exifcons {

/// Library version, e.g. "0.1.0".
const char* version();

/// Everything a run depends on. Defaults are the full-scale recipe; a JSON
/// document overrides any subset of fields and command-line flags override
/// the document.
///
/// Schema (all keys optional):
///   seed, workers
///   model:        ModelConfig JSON (backbone, conv_channels, conv_strides,
///                 embedding_dim, head_widths, output_dim, objective,
///                 output_init_gain)
///   train:        iterations, batch_size, learning_rate, checkpoint_every
///   augmentation: enabled, jpeg_qualities, blur_sigmas, resize_factors,
///                 op_probability, same_probability
///   vocab:        min_attr_count, min_value_count
///   combiner:     iterations, batch_size, learning_rate, hidden,
///                 crops_per_photo
///   localizer:    n_longest, mask_threshold, bandwidth (null = median),
///                 tolerance, max_iterations
///   eval:         pairs_per_attribute, thresholds, boundary_ignore
///   paths:        free-form string map, echoed into artifacts
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  ModelConfig model;

  int iterations = 1'000'000;
  int batch_size = 128;
  double learning_rate = 1e-4;
  /// Steps between intermediate checkpoints; 0 writes only the final one.
  int checkpoint_every = 10'000;

  AugmentationParams augmentation;

  std::size_t min_attr_count = 50'000;
  std::size_t min_value_count = 100;

  int combiner_iterations = 10'000;
  int combiner_batch_size = 128;
  double combiner_learning_rate = 1e-4;
  int combiner_hidden = 512;
  int crops_per_photo = 8;

  int n_longest = 25;
  double mask_threshold = 0.5;
  std::optional<double> bandwidth;
  double mean_shift_tolerance = 1e-4;
  int mean_shift_max_iterations = 200;

  int pairs_per_attribute = 200;
  int thresholds = 256;
  int boundary_ignore = 0;

  std::map<std::string, std::string> paths;

  /// Throws InputError on out-of-range values.
  void validate() const;

  std::string to_json() const;
  /// Applies the keys present in `text` on top of `base`. Unknown keys are
  /// rejected so typos do not silently fall back to defaults.
  static ExperimentConfig from_json(const std::string& text, const ExperimentConfig& base);
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);

  TrainOptions train_options() const;
  CombinerOptions combiner_options() const;
  LocalizerOptions localizer_options() const;
  EvaluationOptions evaluation_options() const;

  bool operator==(const ExperimentConfig&) const;
};

}  // namespace exifcons
