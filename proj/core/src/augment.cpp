#include "exifcons/augment.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "exifcons/errors.hpp"

namespace exifcons {

namespace {

cv::Mat to_mat(const Patch& p) {
  cv::Mat m(kPatchSize, kPatchSize, CV_32FC3);
  for (int y = 0; y < kPatchSize; ++y) {
    auto* row = m.ptr<float>(y);
    for (int x = 0; x < kPatchSize; ++x) {
      for (int c = 0; c < 3; ++c) row[x * 3 + c] = p.at(c, x, y);
    }
  }
  return m;
}

void from_mat(const cv::Mat& m, Patch& p) {
  for (int y = 0; y < kPatchSize; ++y) {
    const auto* row = m.ptr<float>(y);
    for (int x = 0; x < kPatchSize; ++x) {
      for (int c = 0; c < 3; ++c) p.at(c, x, y) = std::clamp(row[x * 3 + c], 0.0f, 1.0f);
    }
  }
}

template <typename T>
T pick(const std::vector<T>& set, Rng& rng) {
  if (set.empty()) throw InputError("empty augmentation parameter set");
  return set[std::size_t(uniform_int(rng, 0, int(set.size()) - 1))];
}

}  // namespace

double AugmentationParams::op_match_probability(AugOp op) const {
  const double q = op_probability;
  std::size_t n = op == AugOp::kRejpeg ? jpeg_qualities.size()
                  : op == AugOp::kBlur ? blur_sigmas.size()
                                       : resize_factors.size();
  return (1 - q) * (1 - q) + q * q / double(n);
}

double AugmentationParams::all_consistent_probability() const {
  const double independent = op_match_probability(AugOp::kRejpeg) *
                             op_match_probability(AugOp::kBlur) *
                             op_match_probability(AugOp::kResize);
  return same_probability + (1 - same_probability) * independent;
}

bool AugmentationSpec::same_parameters(const AugmentationSpec& other, AugOp op) const {
  switch (op) {
    case AugOp::kRejpeg: return rejpeg == other.rejpeg;
    case AugOp::kBlur: return blur == other.blur;
    case AugOp::kResize: return resize == other.resize;
  }
  return false;
}

AugmentationSpec draw_spec(const AugmentationParams& params, Rng& rng) {
  AugmentationSpec s;
  if (coin(rng, params.op_probability)) s.rejpeg = pick(params.jpeg_qualities, rng);
  if (coin(rng, params.op_probability)) s.blur = pick(params.blur_sigmas, rng);
  if (coin(rng, params.op_probability)) s.resize = pick(params.resize_factors, rng);
  shuffle_order(s, rng);
  return s;
}

void shuffle_order(AugmentationSpec& spec, Rng& rng) {
  spec.order.clear();
  if (spec.rejpeg) spec.order.push_back(AugOp::kRejpeg);
  if (spec.blur) spec.order.push_back(AugOp::kBlur);
  if (spec.resize) spec.order.push_back(AugOp::kResize);
  std::shuffle(spec.order.begin(), spec.order.end(), rng);
}

void rejpeg(Patch& patch, int quality) {
  cv::Mat m = to_mat(patch);
  cv::Mat u8, bgr;
  m.convertTo(u8, CV_8UC3, 255.0);
  cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> buf;
  cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, quality});
  cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
  cv::cvtColor(dec, u8, cv::COLOR_BGR2RGB);
  u8.convertTo(m, CV_32FC3, 1.0 / 255.0);
  from_mat(m, patch);
}

void gaussian_blur(Patch& patch, double sigma) {
  cv::Mat m = to_mat(patch), out;
  cv::GaussianBlur(m, out, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
  from_mat(out, patch);
}

void resize_roundtrip(Patch& patch, double factor) {
  const int side = std::max(1, int(std::lround(kPatchSize * factor)));
  cv::Mat m = to_mat(patch), mid, out;
  cv::resize(m, mid, cv::Size(side, side), 0, 0,
             side < kPatchSize ? cv::INTER_AREA : cv::INTER_LINEAR);
  cv::resize(mid, out, cv::Size(kPatchSize, kPatchSize), 0, 0,
             side > kPatchSize ? cv::INTER_AREA : cv::INTER_LINEAR);
  from_mat(out, patch);
}

void apply_spec(Patch& patch, const AugmentationSpec& spec) {
  for (AugOp op : spec.order) {
    switch (op) {
      case AugOp::kRejpeg: rejpeg(patch, *spec.rejpeg); break;
      case AugOp::kBlur: gaussian_blur(patch, *spec.blur); break;
      case AugOp::kResize: resize_roundtrip(patch, *spec.resize); break;
    }
  }
}

std::array<std::uint8_t, 3> postprocessing_labels(const AugmentationSpec& a,
                                                  const AugmentationSpec& b) {
  return {std::uint8_t(a.same_parameters(b, AugOp::kRejpeg)),
          std::uint8_t(a.same_parameters(b, AugOp::kBlur)),
          std::uint8_t(a.same_parameters(b, AugOp::kResize))};
}

PostprocessOutcome apply_postprocessing(Patch& a, Patch& b,
                                        const AugmentationParams& params, Rng& rng) {
  PostprocessOutcome out;
  out.shared = coin(rng, params.same_probability);
  out.spec_a = draw_spec(params, rng);
  if (out.shared) {
    out.spec_b = out.spec_a;
    shuffle_order(out.spec_b, rng);
  } else {
    out.spec_b = draw_spec(params, rng);
  }
  apply_spec(a, out.spec_a);
  apply_spec(b, out.spec_b);
  out.labels = postprocessing_labels(out.spec_a, out.spec_b);
  return out;
}

}  // namespace exifcons
