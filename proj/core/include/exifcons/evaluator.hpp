#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exifcons/image.hpp"

namespace exifcons {

/// Area under the precision-recall curve from a descending-score sweep.
/// Tied scores form one threshold step: the step's recall gain is weighted
/// by the precision after the whole tie group. Throws UndefinedMetricError
/// without positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Detection AP with spliced (label 1) as the positive class; both classes
/// must be present.
double evaluate_detection(std::span<const double> scores, std::span<const std::uint8_t> spliced);

/// `n` evenly spaced thresholds k/(n-1) in [0, 1].
std::vector<double> threshold_sweep(int n = 256);

/// Pixels excluded from scoring, e.g. a band around approximate mask edges.
/// An empty mask ignores nothing.
using IgnoreMask = Mask;

/// Pixels within `radius` (Chebyshev) of a label change in `truth`.
IgnoreMask boundary_band(const Mask& truth, int radius);

/// `prediction` is splice-positive: higher = more likely spliced.
double localization_ap(const FloatMap& prediction, const Mask& truth,
                       const IgnoreMask& ignore = {});
/// max(AP(prediction), AP(1 - prediction)).
double permuted_ap(const FloatMap& prediction, const Mask& truth, const IgnoreMask& ignore = {});

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Splice prediction is value >= threshold.
Confusion confusion_at(const FloatMap& prediction, const Mask& truth, double threshold,
                       const IgnoreMask& ignore = {});

/// Mean of splice-region and background IOU; an empty union scores 1.
double class_mean_iou(const Confusion& c);
/// 2TP / (2TP + FN + FP); 0 when the denominator is 0.
double f1_score(const Confusion& c);
/// Matthews correlation; 0 when the denominator is 0.
double mcc_score(const Confusion& c);

/// Best class-mean IOU over the thresholds.
double ciou(const FloatMap& prediction, const Mask& truth, std::span<const double> thresholds,
            const IgnoreMask& ignore = {});

struct MccF1 {
  double mcc = 0.0;
  double f1 = 0.0;
};
/// MCC and F1, each maximized independently over the thresholds.
MccF1 mcc_f1(const FloatMap& prediction, const Mask& truth, std::span<const double> thresholds,
             const IgnoreMask& ignore = {});

/// Confusion counts at every threshold in one pass over sorted pixel values.
std::vector<Confusion> sweep_confusions(const FloatMap& prediction, const Mask& truth,
                                        std::span<const double> thresholds,
                                        const IgnoreMask& ignore = {});

struct BenchmarkItem {
  std::string image_id;  // file stem
  std::filesystem::path image_path;
  Mask truth;            // all zeros for authentic images
  bool spliced = false;
};

/// Known layouts share one contract: <root>/images/* are spliced images with
/// <root>/masks/<stem>.png (nonzero = spliced); optional <root>/authentic/*
/// are untampered. Throws DatasetError for a missing mask.
std::vector<BenchmarkItem> load_benchmark(const std::string& name,
                                          const std::filesystem::path& root);
std::vector<std::string> known_benchmarks();

struct EvaluationOptions {
  int thresholds = 256;
  int boundary_ignore = 0;
};

struct ImageRow {
  std::string image_id;
  bool spliced = false;
  double detection_score = 0.0;
  std::optional<double> ap, p_ap, ciou, mcc, f1;
};

struct EvaluationReport {
  std::string dataset;
  std::optional<double> detection_map;
  std::optional<double> localization_map, permuted_map, ciou, mcc, f1;
  std::size_t spliced = 0, authentic = 0;
  std::vector<ImageRow> rows;
};

/// Reads <pred>/<stem>.consistency.png (1 = consistent) and <pred>/<stem>.json
/// (detection_score) for every item; localization metrics use 1 - consistency.
EvaluationReport evaluate_predictions(const std::string& dataset,
                                      const std::vector<BenchmarkItem>& items,
                                      const std::filesystem::path& pred_dir,
                                      const EvaluationOptions& options = {});

void write_report(const std::filesystem::path& json_path, const EvaluationReport& report,
                  const std::string& config_json = "{}");
void write_report_csv(const std::filesystem::path& csv_path, const EvaluationReport& report);

}  // namespace exifcons
