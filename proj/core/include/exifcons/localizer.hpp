#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exifcons/combiner.hpp"
#include "exifcons/consistency_net.hpp"
#include "exifcons/image.hpp"

namespace exifcons {

struct GridPlan {
  std::vector<std::pair<int, int>> coords;  // top-left (x, y), row-major over the grid
  double stride = 0.0;
  int cols = 0;
  int rows = 0;
  int patch_size = kPatchSize;

  std::size_t size() const { return coords.size(); }
};

/// Endpoint-inclusive grid: n_longest patches span the longest side, the
/// short side uses the same stride.
GridPlan plan_grid(int width, int height, int patch_size = kPatchSize, int n_longest = 25);

using AffinityMatrix = Eigen::MatrixXd;

/// Directed pair scores c(p_i, p_j) for every ordered pair of patches.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  /// Returns a P x P matrix; the diagonal is ignored.
  virtual Eigen::MatrixXd score(const std::vector<Patch>& patches) const = 0;
};

/// Combiner applied to the exif network's consistency vectors.
class ModelScorer final : public PairScorer {
 public:
  ModelScorer(const ConsistencyNet<float>& net, const Combiner& combiner)
      : net_(net), combiner_(combiner) {}
  Eigen::MatrixXd score(const std::vector<Patch>& patches) const override;

 private:
  const ConsistencyNet<float>& net_;
  const Combiner& combiner_;
};

std::vector<Patch> crop_grid(const ImageU8& image, const GridPlan& grid);

/// A(i,j) = (c(i,j) + c(j,i)) / 2 with a unit diagonal.
AffinityMatrix compute_affinity(const ImageU8& image, const PairScorer& scorer,
                                const GridPlan& grid);

/// Per-pixel mean of `row[j]` over the patches j covering the pixel.
/// Uncovered pixels copy the nearest covered pixel.
FloatMap render_row(const Eigen::VectorXd& row, const GridPlan& grid, int width, int height);

FloatMap response_map(const AffinityMatrix& affinity, const GridPlan& grid, std::size_t i,
                      int width, int height);

struct MeanShiftResult {
  std::vector<int> labels;           // mode index per point
  std::vector<int> mode_sizes;
  int dominant = 0;                  // mode with the most members, lowest index on ties
  std::vector<int> dominant_members;
  Eigen::VectorXd merged_row;        // mean affinity row of the dominant members
  double bandwidth = 0.0;
  int iterations = 0;
};

struct MeanShiftOptions {
  /// Fixed bandwidth; the median pairwise row distance when unset.
  std::optional<double> bandwidth;
  double tolerance = 1e-4;
  int max_iterations = 200;
};

/// Gaussian-kernel mean shift over the rows of `affinity`.
MeanShiftResult mean_shift(const AffinityMatrix& affinity, const MeanShiftOptions& options = {});

struct NcutResult {
  std::vector<int> labels;  // 0 / 1 per patch
  bool degenerate = false;  // the second eigenvalue was not separated from the third
  double ncut = 0.0;
};

/// Two-way spectral partition on the symmetric normalized Laplacian. Rows
/// with no off-diagonal weight are put on side 1.
NcutResult segment_ncuts(const AffinityMatrix& affinity);

struct SpliceMaskResult {
  Mask mask;
  bool no_candidate = false;
  bool splice_is_low = true;  // which thresholded side was chosen
};

/// The smaller side of the thresholded map is the splice; equal sizes pick
/// the lower-consistency side.
SpliceMaskResult splice_mask(const FloatMap& consistency, double threshold = 0.5);

/// Spatial mean of (1 - consistency); higher means more likely spliced.
double detection_score(const FloatMap& consistency);

struct LocalizerOptions {
  int n_longest = 25;
  double mask_threshold = 0.5;
  MeanShiftOptions mean_shift;
};

struct SpliceResult {
  GridPlan grid;
  AffinityMatrix affinity;
  FloatMap consistency;
  SpliceMaskResult mask;
  double score = 0.0;
  MeanShiftResult modes;
  NcutResult ncut;
  std::vector<std::string> flags;
};

SpliceResult localize(const ImageU8& image, const PairScorer& scorer,
                      const LocalizerOptions& options = {});

/// Writes <stem>.consistency.png, <stem>.mask.png and <stem>.json into `dir`,
/// plus <stem>.affinity.f32 and <stem>.affinity.json when `dump_affinity`.
void write_splice_result(const std::filesystem::path& dir, const std::string& stem,
                         const SpliceResult& result, bool dump_affinity,
                         const std::string& config_json = "{}");

}  // namespace exifcons
