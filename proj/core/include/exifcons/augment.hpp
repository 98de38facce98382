#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "exifcons/image.hpp"
#include "exifcons/rng.hpp"

namespace exifcons {

enum class AugOp : std::uint8_t { kRejpeg = 0, kBlur = 1, kResize = 2 };

/// Discretized parameter sets and draw probabilities for post-processing.
struct AugmentationParams {
  std::vector<int> jpeg_qualities{50, 60, 70, 80, 90};
  std::vector<double> blur_sigmas{0.5, 1.0, 1.5, 2.0};
  std::vector<double> resize_factors{0.5, 0.75, 1.25, 1.5};
  /// Chance that a drawn spec includes each individual op.
  double op_probability = 0.5;
  /// Chance that both patches of a pair receive the same spec.
  double same_probability = 0.5;
  bool enabled = true;

  /// Probability that one op's label comes out consistent.
  double op_match_probability(AugOp op) const;
  /// Probability that all three post-processing labels are consistent.
  double all_consistent_probability() const;
};

/// Which ops a patch receives and with what parameter. `order` is the
/// permutation the ops are applied in; it does not affect the labels.
struct AugmentationSpec {
  std::optional<int> rejpeg;
  std::optional<double> blur;
  std::optional<double> resize;
  std::vector<AugOp> order;

  bool same_parameters(const AugmentationSpec& other, AugOp op) const;
};

AugmentationSpec draw_spec(const AugmentationParams& params, Rng& rng);

/// Draws a fresh application order for the ops present in `spec`.
void shuffle_order(AugmentationSpec& spec, Rng& rng);

void apply_spec(Patch& patch, const AugmentationSpec& spec);

void rejpeg(Patch& patch, int quality);
void gaussian_blur(Patch& patch, double sigma);
void resize_roundtrip(Patch& patch, double factor);

/// Post-processing labels, ordered (rejpeg, blur, resize); 1 = consistent.
std::array<std::uint8_t, 3> postprocessing_labels(const AugmentationSpec& a,
                                                  const AugmentationSpec& b);

struct PostprocessOutcome {
  std::array<std::uint8_t, 3> labels{1, 1, 1};
  AugmentationSpec spec_a;
  AugmentationSpec spec_b;
  bool shared = true;
};

/// With probability `same_probability` both patches get one spec, otherwise
/// two independent specs. Each patch gets its own random op order.
PostprocessOutcome apply_postprocessing(Patch& a, Patch& b,
                                        const AugmentationParams& params, Rng& rng);

}  // namespace exifcons
