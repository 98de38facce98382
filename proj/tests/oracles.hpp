#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. They trade speed for obviousness: every metric is
// recomputed from its definition with plain loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "exifcons/image.hpp"
#include "exifcons/metadata.hpp"

namespace oracle {

struct Counts {
  double tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Scores and labels with ignored pixels dropped.
inline std::pair<std::vector<double>, std::vector<std::uint8_t>> kept(
    const exifcons::FloatMap& pred, const exifcons::Mask& truth, const exifcons::Mask* ignore) {
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (ignore && !ignore->bits.empty() && ignore->bits[i]) continue;
    s.push_back(pred.values[i]);
    l.push_back(truth.bits[i] ? 1 : 0);
  }
  return {s, l};
}

/// AP as a sum over distinct score levels, highest first: each level adds
/// (recall gain) x (precision of everything scored at or above it).
/// Returns nullopt without positives.
inline std::optional<double> average_precision(const std::vector<double>& scores,
                                               const std::vector<std::uint8_t>& labels) {
  double positives = 0;
  for (auto l : labels) positives += l;
  if (positives == 0) return std::nullopt;
  std::set<double, std::greater<>> levels(scores.begin(), scores.end());
  double ap = 0, prev_recall = 0;
  for (double t : levels) {
    double tp = 0, pp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++pp;
        tp += labels[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / pp);
    prev_recall = recall;
  }
  return ap;
}

inline Counts confusion(const std::vector<double>& s, const std::vector<std::uint8_t>& l,
                        double t) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= t;
    if (p && l[i]) ++c.tp;
    if (p && !l[i]) ++c.fp;
    if (!p && !l[i]) ++c.tn;
    if (!p && l[i]) ++c.fn;
  }
  return c;
}

inline double iou(double inter, double uni) { return uni == 0 ? 1.0 : inter / uni; }

inline double ciou_at(const Counts& c) {
  return 0.5 * (iou(c.tp, c.tp + c.fp + c.fn) + iou(c.tn, c.tn + c.fn + c.fp));
}

inline double f1_at(const Counts& c) {
  const double d = 2 * c.tp + c.fn + c.fp;
  return d == 0 ? 0.0 : 2 * c.tp / d;
}

inline double mcc_at(const Counts& c) {
  const double d = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn);
  return d == 0 ? 0.0 : (c.tp * c.tn - c.fp * c.fn) / std::sqrt(d);
}

struct Localization {
  std::optional<double> ap, p_ap;
  double ciou = 0, mcc = 0, f1 = 0;
};

inline Localization localization(const exifcons::FloatMap& pred, const exifcons::Mask& truth,
                                 const std::vector<double>& thresholds,
                                 const exifcons::Mask* ignore = nullptr) {
  auto [s, l] = kept(pred, truth, ignore);
  Localization out;
  out.ap = average_precision(s, l);
  std::vector<double> flipped(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) flipped[i] = 1.0 - s[i];
  const auto ap_flipped = average_precision(flipped, l);
  if (out.ap) out.p_ap = std::max(*out.ap, *ap_flipped);
  out.ciou = -1;
  out.mcc = -2;
  out.f1 = -1;
  for (double t : thresholds) {
    const auto c = confusion(s, l, t);
    out.ciou = std::max(out.ciou, ciou_at(c));
    out.mcc = std::max(out.mcc, mcc_at(c));
    out.f1 = std::max(out.f1, f1_at(c));
  }
  return out;
}

/// Vocabulary counts recomputed by scanning every record per attribute.
struct VocabCounts {
  std::map<std::string, std::size_t> attr_photos;
  std::map<std::string, std::map<std::string, std::size_t>> values;
};

inline VocabCounts count_vocabulary(const std::vector<exifcons::PhotoRecord>& records,
                                    std::size_t min_attr, std::size_t min_value) {
  std::set<std::string> names;
  for (const auto& r : records) {
    for (const auto& kv : r.attributes) names.insert(kv.first);
  }
  VocabCounts out;
  for (const auto& name : names) {
    std::size_t carriers = 0;
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (const auto* v = r.value(name)) {
        ++carriers;
        seen.insert(*v);
      }
    }
    if (carriers <= min_attr) continue;
    out.attr_photos[name] = carriers;
    auto& kept_values = out.values[name];
    for (const auto& v : seen) {
      std::size_t c = 0;
      for (const auto& r : records) {
        const auto* x = r.value(name);
        if (x && *x == v) ++c;
      }
      if (c >= min_value) kept_values[v] = c;
    }
  }
  return out;
}

/// Central difference of `loss` with respect to `w`. A piecewise-smooth loss
/// (ReLU networks) has kinks; a stencil that straddles one shows up as
/// disagreeing one-sided slopes, and the step is shrunk until they agree.
inline double central_difference(const std::function<double()>& loss, double& w,
                                 double h = 1e-6, double min_h = 1e-9) {
  const double saved = w;
  const double f0 = loss();
  double central = 0;
  for (; h >= min_h; h /= 10) {
    w = saved + h;
    const double up = loss();
    w = saved - h;
    const double down = loss();
    w = saved;
    const double right = (up - f0) / h;
    const double left = (f0 - down) / h;
    central = (up - down) / (2 * h);
    // Roundoff in each slope is about 1e-16 / h.
    const double noise = 4e-16 * std::max(1.0, std::abs(f0)) / h;
    if (std::abs(right - left) <= 1e-4 * std::max(std::abs(right), std::abs(left)) + noise) break;
  }
  return central;
}

}  // namespace oracle
