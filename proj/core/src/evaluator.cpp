#include "exifcons/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/imgproc.hpp>
#include <set>
#include <sstream>

#include "exifcons/config.hpp"
#include "exifcons/errors.hpp"

namespace exifcons {

using json = nlohmann::ordered_json;

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  const std::size_t positives = std::size_t(std::count_if(
      labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  if (positives == 0) throw UndefinedMetricError("average precision needs a positive label");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, group_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_tp += labels[order[j]] != 0;
      ++j;
    }
    tp += group_tp;
    seen = j;
    if (group_tp > 0) {
      ap += (double(group_tp) / double(positives)) * (double(tp) / double(seen));
    }
    i = j;
  }
  return ap;
}

double evaluate_detection(std::span<const double> scores, std::span<const std::uint8_t> spliced) {
  const bool has_pos = std::any_of(spliced.begin(), spliced.end(), [](auto v) { return v != 0; });
  const bool has_neg = std::any_of(spliced.begin(), spliced.end(), [](auto v) { return v == 0; });
  if (!has_pos || !has_neg) {
    throw UndefinedMetricError("detection AP needs both spliced and authentic images");
  }
  return average_precision(scores, spliced);
}

std::vector<double> threshold_sweep(int n) {
  if (n < 2) throw InputError("threshold sweep needs at least two values");
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) t[std::size_t(k)] = double(k) / double(n - 1);
  return t;
}

IgnoreMask boundary_band(const Mask& truth, int radius) {
  IgnoreMask band(truth.width, truth.height);
  if (radius <= 0) return band;
  cv::Mat m(truth.height, truth.width, CV_8U, const_cast<std::uint8_t*>(truth.bits.data()));
  cv::Mat kernel = cv::Mat::ones(2 * radius + 1, 2 * radius + 1, CV_8U);
  cv::Mat dil, ero;
  cv::dilate(m, dil, kernel, {-1, -1}, 1, cv::BORDER_REPLICATE);
  cv::erode(m, ero, kernel, {-1, -1}, 1, cv::BORDER_REPLICATE);
  for (int y = 0; y < truth.height; ++y) {
    for (int x = 0; x < truth.width; ++x) {
      band.at(x, y) = dil.at<std::uint8_t>(y, x) != ero.at<std::uint8_t>(y, x);
    }
  }
  return band;
}

namespace {

void check_shapes(const FloatMap& p, const Mask& t, const IgnoreMask& ignore) {
  if (p.width != t.width || p.height != t.height) {
    throw InputError("prediction and mask sizes differ: " + std::to_string(p.width) + "x" +
                     std::to_string(p.height) + " vs " + std::to_string(t.width) + "x" +
                     std::to_string(t.height));
  }
  if (!ignore.bits.empty() && (ignore.width != t.width || ignore.height != t.height)) {
    throw InputError("ignore mask size differs from the ground truth");
  }
}

bool ignored(const IgnoreMask& ignore, std::size_t i) {
  return !ignore.bits.empty() && ignore.bits[i] != 0;
}

double pixel_ap(const FloatMap& p, const Mask& t, const IgnoreMask& ignore, bool flip) {
  check_shapes(p, t, ignore);
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  s.reserve(p.size());
  l.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (ignored(ignore, i)) continue;
    s.push_back(flip ? 1.0 - p.values[i] : p.values[i]);
    l.push_back(t.bits[i] != 0);
  }
  return average_precision(s, l);
}

}  // namespace

double localization_ap(const FloatMap& prediction, const Mask& truth, const IgnoreMask& ignore) {
  return pixel_ap(prediction, truth, ignore, false);
}

double permuted_ap(const FloatMap& prediction, const Mask& truth, const IgnoreMask& ignore) {
  return std::max(pixel_ap(prediction, truth, ignore, false),
                  pixel_ap(prediction, truth, ignore, true));
}

Confusion confusion_at(const FloatMap& prediction, const Mask& truth, double threshold,
                       const IgnoreMask& ignore) {
  check_shapes(prediction, truth, ignore);
  Confusion c;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    if (ignored(ignore, i)) continue;
    const bool pred = prediction.values[i] >= threshold;
    const bool pos = truth.bits[i] != 0;
    if (pred && pos) ++c.tp;
    else if (pred) ++c.fp;
    else if (pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double class_mean_iou(const Confusion& c) {
  const double u1 = double(c.tp + c.fp + c.fn);
  const double u0 = double(c.tn + c.fn + c.fp);
  const double iou1 = u1 == 0 ? 1.0 : double(c.tp) / u1;
  const double iou0 = u0 == 0 ? 1.0 : double(c.tn) / u0;
  return 0.5 * (iou1 + iou0);
}

double f1_score(const Confusion& c) {
  const double den = 2.0 * double(c.tp) + double(c.fn) + double(c.fp);
  return den == 0 ? 0.0 : 2.0 * double(c.tp) / den;
}

double mcc_score(const Confusion& c) {
  const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

std::vector<Confusion> sweep_confusions(const FloatMap& prediction, const Mask& truth,
                                        std::span<const double> thresholds,
                                        const IgnoreMask& ignore) {
  check_shapes(prediction, truth, ignore);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    if (ignored(ignore, i)) continue;
    (truth.bits[i] ? pos : neg).push_back(prediction.values[i]);
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<Confusion> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto p_below = std::uint64_t(std::lower_bound(pos.begin(), pos.end(), t) - pos.begin());
    const auto n_below = std::uint64_t(std::lower_bound(neg.begin(), neg.end(), t) - neg.begin());
    Confusion c;
    c.tp = pos.size() - p_below;
    c.fn = p_below;
    c.fp = neg.size() - n_below;
    c.tn = n_below;
    out.push_back(c);
  }
  return out;
}

double ciou(const FloatMap& prediction, const Mask& truth, std::span<const double> thresholds,
            const IgnoreMask& ignore) {
  double best = 0.0;
  for (const auto& c : sweep_confusions(prediction, truth, thresholds, ignore)) {
    best = std::max(best, class_mean_iou(c));
  }
  return best;
}

MccF1 mcc_f1(const FloatMap& prediction, const Mask& truth, std::span<const double> thresholds,
             const IgnoreMask& ignore) {
  MccF1 best{-1.0, 0.0};
  for (const auto& c : sweep_confusions(prediction, truth, thresholds, ignore)) {
    best.mcc = std::max(best.mcc, mcc_score(c));
    best.f1 = std::max(best.f1, f1_score(c));
  }
  if (thresholds.empty()) best.mcc = 0.0;
  return best;
}

std::vector<std::string> known_benchmarks() {
  return {"synthetic", "columbia", "carvalho", "realistic-tampering", "in-the-wild", "hays"};
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  static const std::set<std::string> exts{".jpg", ".jpeg", ".png", ".tif", ".tiff", ".bmp"};
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
  return exts.count(e) > 0;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<BenchmarkItem> load_benchmark(const std::string& name,
                                          const std::filesystem::path& root) {
  const auto names = known_benchmarks();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw InputError("unknown dataset '" + name + "' (known: " + list + ")");
  }
  const auto images = root / "images";
  if (!std::filesystem::is_directory(images)) {
    throw DatasetError("dataset root lacks an images/ directory: " + root.string());
  }
  std::vector<BenchmarkItem> items;
  std::set<std::string> stems;
  for (const auto& path : list_images(images)) {
    BenchmarkItem it;
    it.image_id = path.stem().string();
    it.image_path = path;
    it.spliced = true;
    const auto mask_path = root / "masks" / (it.image_id + ".png");
    if (!std::filesystem::exists(mask_path)) {
      throw DatasetError("missing mask for spliced image " + path.string() + ": expected " +
                         mask_path.string());
    }
    it.truth = load_mask_png(mask_path);
    stems.insert(it.image_id);
    items.push_back(std::move(it));
  }
  const auto authentic = root / "authentic";
  if (std::filesystem::is_directory(authentic)) {
    for (const auto& path : list_images(authentic)) {
      BenchmarkItem it;
      it.image_id = path.stem().string();
      if (!stems.insert(it.image_id).second) {
        throw DatasetError("image id " + it.image_id + " appears twice in " + root.string());
      }
      it.image_path = path;
      it.spliced = false;
      items.push_back(std::move(it));
    }
  }
  return items;
}

namespace {

double mean_of(const std::vector<ImageRow>& rows, std::optional<double> ImageRow::*field) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.*field) {
      s += *(r.*field);
      ++n;
    }
  }
  return n ? s / double(n) : 0.0;
}

}  // namespace

EvaluationReport evaluate_predictions(const std::string& dataset,
                                      const std::vector<BenchmarkItem>& items,
                                      const std::filesystem::path& pred_dir,
                                      const EvaluationOptions& options) {
  EvaluationReport rep;
  rep.dataset = dataset;
  const auto thresholds = threshold_sweep(options.thresholds);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& item : items) {
    const auto map_path = pred_dir / (item.image_id + ".consistency.png");
    const auto meta_path = pred_dir / (item.image_id + ".json");
    if (!std::filesystem::exists(map_path) || !std::filesystem::exists(meta_path)) {
      throw DatasetError("missing prediction for " + item.image_id + " in " + pred_dir.string());
    }
    ImageRow row;
    row.image_id = item.image_id;
    row.spliced = item.spliced;
    try {
      row.detection_score = json::parse(read_text(meta_path)).at("detection_score").get<double>();
    } catch (const json::exception& e) {
      throw DatasetError("bad prediction sidecar " + meta_path.string() + ": " + e.what());
    }
    scores.push_back(row.detection_score);
    labels.push_back(item.spliced);
    if (item.spliced) {
      ++rep.spliced;
      FloatMap pred = load_gray16_png(map_path);
      for (auto& v : pred.values) v = 1.0 - v;
      const auto ignore = boundary_band(item.truth, options.boundary_ignore);
      if (item.truth.count() > 0) {
        row.ap = localization_ap(pred, item.truth, ignore);
        row.p_ap = permuted_ap(pred, item.truth, ignore);
      }
      row.ciou = ciou(pred, item.truth, thresholds, ignore);
      const auto mf = mcc_f1(pred, item.truth, thresholds, ignore);
      row.mcc = mf.mcc;
      row.f1 = mf.f1;
    } else {
      ++rep.authentic;
    }
    rep.rows.push_back(std::move(row));
  }
  if (rep.spliced > 0 && rep.authentic > 0) rep.detection_map = evaluate_detection(scores, labels);
  if (rep.spliced > 0) {
    rep.localization_map = mean_of(rep.rows, &ImageRow::ap);
    rep.permuted_map = mean_of(rep.rows, &ImageRow::p_ap);
    rep.ciou = mean_of(rep.rows, &ImageRow::ciou);
    rep.mcc = mean_of(rep.rows, &ImageRow::mcc);
    rep.f1 = mean_of(rep.rows, &ImageRow::f1);
  }
  return rep;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void write_report(const std::filesystem::path& json_path, const EvaluationReport& report,
                  const std::string& config_json) {
  json j;
  j["tool_version"] = version();
  j["dataset"] = report.dataset;
  j["images"] = {{"spliced", report.spliced}, {"authentic", report.authentic}};
  j["detection_map"] = opt(report.detection_map);
  j["localization_map"] = opt(report.localization_map);
  j["permuted_map"] = opt(report.permuted_map);
  j["ciou"] = opt(report.ciou);
  j["mcc"] = opt(report.mcc);
  j["f1"] = opt(report.f1);
  j["notes"] = {
      "localization mAP is per-image pixel AP averaged over spliced images, not pooled pixels",
      "localization metrics score 1 - consistency (splice-positive)",
      "cIOU, MCC and F1 use the best of a per-image threshold sweep"};
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"image_id", r.image_id},
                    {"spliced", r.spliced},
                    {"detection_score", r.detection_score},
                    {"ap", opt(r.ap)},
                    {"p_ap", opt(r.p_ap)},
                    {"ciou", opt(r.ciou)},
                    {"mcc", opt(r.mcc)},
                    {"f1", opt(r.f1)}});
  }
  j["per_image"] = std::move(rows);
  j["config"] = json::parse(config_json);
  write_text(json_path, j.dump(2) + "\n");
}

void write_report_csv(const std::filesystem::path& csv_path, const EvaluationReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "image_id,spliced,detection_score,ap,p_ap,ciou,mcc,f1\n";
  auto cell = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : report.rows) {
    os << r.image_id << ',' << (r.spliced ? 1 : 0) << ',' << r.detection_score << ',';
    cell(r.ap);
    os << ',';
    cell(r.p_ap);
    os << ',';
    cell(r.ciou);
    os << ',';
    cell(r.mcc);
    os << ',';
    cell(r.f1);
    os << '\n';
  }
  write_text(csv_path, os.str());
}

}  // namespace exifcons
