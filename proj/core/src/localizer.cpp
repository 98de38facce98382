#include "exifcons/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <nlohmann/json.hpp>

#include "exifcons/config.hpp"
#include "exifcons/errors.hpp"

namespace exifcons {

using json = nlohmann::ordered_json;

GridPlan plan_grid(int width, int height, int patch_size, int n_longest) {
  if (patch_size <= 0) throw InputError("patch size must be positive");
  if (n_longest < 1) throw InputError("n_longest must be at least 1");
  if (width < patch_size || height < patch_size) {
    throw TooSmallError(width, height, patch_size);
  }
  GridPlan g;
  g.patch_size = patch_size;
  const int longest = std::max(width, height);
  const int shortest = std::min(width, height);
  const long span_long = longest - patch_size;
  const long span_short = shortest - patch_size;
  int n_long = n_longest, n_short;
  if (span_long == 0 || n_longest == 1) {
    n_long = 1;
    n_short = 1;
    g.stride = 0.0;
  } else {
    g.stride = double(span_long) / double(n_longest - 1);
    // floor(span_short / stride) in exact integer arithmetic.
    n_short = int(span_short * (n_longest - 1) / span_long) + 1;
  }
  auto positions = [&](int count) {
    std::vector<int> p;
    for (int k = 0; k < count; ++k) p.push_back(int(std::lround(k * g.stride)));
    return p;
  };
  const auto along_long = positions(n_long);
  const auto along_short = positions(n_short);
  const bool wide = width >= height;
  const auto& xs = wide ? along_long : along_short;
  const auto& ys = wide ? along_short : along_long;
  g.cols = int(xs.size());
  g.rows = int(ys.size());
  for (int y : ys) {
    for (int x : xs) g.coords.emplace_back(x, y);
  }
  return g;
}

std::vector<Patch> crop_grid(const ImageU8& image, const GridPlan& grid) {
  std::vector<Patch> out;
  out.reserve(grid.size());
  for (const auto& [x, y] : grid.coords) out.push_back(crop_patch(image, x, y));
  return out;
}

Eigen::MatrixXd ModelScorer::score(const std::vector<Patch>& patches) const {
  const int p = int(patches.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Ones(p, p);
  if (p < 2) return c;
  const auto e = net_.embed(patches_to_matrix<float>(std::span<const Patch>(patches)));
  constexpr int kRowsPerChunk = 16;
  std::vector<std::pair<int, int>> pairs;
  for (int i0 = 0; i0 < p; i0 += kRowsPerChunk) {
    pairs.clear();
    const int i1 = std::min(p, i0 + kRowsPerChunk);
    for (int i = i0; i < i1; ++i) {
      for (int j = 0; j < p; ++j) {
        if (i != j) pairs.emplace_back(i, j);
      }
    }
    nn::Matrix<float> probs = net_.pair_logits_indexed(e, pairs);
    probs = probs.unaryExpr([](float v) { return float(sigmoid(v)); });
    const auto scores = combiner_.predict(probs);
    for (std::size_t k = 0; k < pairs.size(); ++k) c(pairs[k].first, pairs[k].second) = scores[k];
  }
  return c;
}

AffinityMatrix compute_affinity(const ImageU8& image, const PairScorer& scorer,
                                const GridPlan& grid) {
  const auto patches = crop_grid(image, grid);
  const Eigen::MatrixXd c = scorer.score(patches);
  const Eigen::Index p = Eigen::Index(patches.size());
  if (c.rows() != p || c.cols() != p) throw InputError("scorer returned a wrongly sized matrix");
  AffinityMatrix a = 0.5 * (c + c.transpose());
  a.diagonal().setOnes();
  return a;
}

namespace {

/// Per pixel along one axis: the range [lo, hi) of grid indices covering
/// it, after snapping uncovered pixels to the nearest covered one.
std::vector<std::pair<int, int>> axis_cover(const std::vector<int>& starts, int patch, int size) {
  std::vector<std::pair<int, int>> cover(std::size_t(size), {0, 0});
  std::vector<int> covered;
  for (int x = 0; x < size; ++x) {
    int lo = -1, hi = -1;
    for (int k = 0; k < int(starts.size()); ++k) {
      if (starts[std::size_t(k)] <= x && x < starts[std::size_t(k)] + patch) {
        if (lo < 0) lo = k;
        hi = k + 1;
      }
    }
    if (lo >= 0) {
      cover[std::size_t(x)] = {lo, hi};
      covered.push_back(x);
    }
  }
  if (covered.empty()) throw InputError("grid covers no pixels");
  for (int x = 0; x < size; ++x) {
    if (cover[std::size_t(x)].second > 0) continue;
    auto it = std::lower_bound(covered.begin(), covered.end(), x);
    int nearest;
    if (it == covered.end()) {
      nearest = covered.back();
    } else if (it == covered.begin()) {
      nearest = *it;
    } else {
      const int above = *it, below = *(it - 1);
      nearest = (x - below <= above - x) ? below : above;
    }
    cover[std::size_t(x)] = cover[std::size_t(nearest)];
  }
  return cover;
}

std::vector<int> unique_starts(const GridPlan& grid, bool x_axis) {
  std::vector<int> s;
  const int n = x_axis ? grid.cols : grid.rows;
  for (int k = 0; k < n; ++k) {
    const auto& c = grid.coords[std::size_t(x_axis ? k : k * grid.cols)];
    s.push_back(x_axis ? c.first : c.second);
  }
  return s;
}

}  // namespace

FloatMap render_row(const Eigen::VectorXd& row, const GridPlan& grid, int width, int height) {
  if (row.size() != Eigen::Index(grid.size()) || grid.size() == 0 ||
      grid.size() != std::size_t(grid.cols) * std::size_t(grid.rows)) {
    throw InputError("row length does not match the grid");
  }
  const auto xcov = axis_cover(unique_starts(grid, true), grid.patch_size, width);
  const auto ycov = axis_cover(unique_starts(grid, false), grid.patch_size, height);

  // Each pixel's value depends only on its (column range, row range) pair.
  std::map<std::pair<int, int>, int> xid, yid;
  for (const auto& r : xcov) xid.emplace(r, int(xid.size()));
  for (const auto& r : ycov) yid.emplace(r, int(yid.size()));
  Eigen::MatrixXd table(xid.size(), yid.size());
  for (const auto& [xr, xi] : xid) {
    for (const auto& [yr, yi] : yid) {
      double sum = 0.0, lo = INFINITY, hi = -INFINITY;
      for (int r = yr.first; r < yr.second; ++r) {
        for (int c = xr.first; c < xr.second; ++c) {
          const double v = row(r * grid.cols + c);
          sum += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      const int n = (xr.second - xr.first) * (yr.second - yr.first);
      table(xi, yi) = std::clamp(sum / n, lo, hi);
    }
  }
  FloatMap out(width, height);
  std::vector<int> xmap(std::size_t(width), 0);
  for (int x = 0; x < width; ++x) xmap[std::size_t(x)] = xid.at(xcov[std::size_t(x)]);
  for (int y = 0; y < height; ++y) {
    const int yi = yid.at(ycov[std::size_t(y)]);
    for (int x = 0; x < width; ++x) out.at(x, y) = table(xmap[std::size_t(x)], yi);
  }
  return out;
}

FloatMap response_map(const AffinityMatrix& affinity, const GridPlan& grid, std::size_t i,
                      int width, int height) {
  if (i >= std::size_t(affinity.rows())) throw InputError("patch index out of range");
  return render_row(affinity.row(Eigen::Index(i)).transpose(), grid, width, height);
}

MeanShiftResult mean_shift(const AffinityMatrix& affinity, const MeanShiftOptions& options) {
  const Eigen::Index p = affinity.rows();
  if (p == 0 || affinity.cols() != p) throw InputError("affinity must be a non-empty square matrix");
  const Eigen::MatrixXd& x = affinity;
  MeanShiftResult r;

  const Eigen::VectorXd xsq = x.rowwise().squaredNorm();
  auto sq_dists = [&](const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
    Eigen::MatrixXd d = -2.0 * (y * x.transpose());
    d.colwise() += y.rowwise().squaredNorm();
    d.rowwise() += xsq.transpose();
    return d.cwiseMax(0.0);
  };

  if (options.bandwidth) {
    r.bandwidth = *options.bandwidth;
  } else if (p > 1) {
    std::vector<double> pairwise;
    pairwise.reserve(std::size_t(p * (p - 1) / 2));
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = i + 1; j < p; ++j) pairwise.push_back((x.row(i) - x.row(j)).norm());
    }
    const std::size_t mid = pairwise.size() / 2;
    std::nth_element(pairwise.begin(), pairwise.begin() + std::ptrdiff_t(mid), pairwise.end());
    double median = pairwise[mid];
    if (pairwise.size() % 2 == 0) {
      const double below = *std::max_element(pairwise.begin(), pairwise.begin() + std::ptrdiff_t(mid));
      median = 0.5 * (median + below);
    }
    r.bandwidth = median;
  }
  if (r.bandwidth < 0) throw InputError("mean-shift bandwidth must be non-negative");

  Eigen::MatrixXd y = x;
  if (r.bandwidth > 0) {
    const double inv = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
    for (int it = 0; it < options.max_iterations; ++it) {
      const Eigen::MatrixXd k = (-inv * sq_dists(y)).array().exp().matrix();
      Eigen::MatrixXd next = k * x;
      const Eigen::VectorXd w = k.rowwise().sum();
      for (Eigen::Index i = 0; i < p; ++i) {
        if (w(i) > 0) {
          next.row(i) /= w(i);
        } else {
          next.row(i) = y.row(i);
        }
      }
      const double shift = (next - y).rowwise().norm().maxCoeff();
      y.swap(next);
      r.iterations = it + 1;
      if (shift < options.tolerance) break;
    }
  }

  // Merge converged points into modes, greedily in index order.
  std::vector<Eigen::Index> centers;
  r.labels.assign(std::size_t(p), 0);
  const double merge = r.bandwidth / 2.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    int found = -1;
    for (std::size_t m = 0; m < centers.size(); ++m) {
      const double d = (y.row(i) - y.row(centers[m])).norm();
      if (d < merge || (merge == 0.0 && d == 0.0)) {
        found = int(m);
        break;
      }
    }
    if (found < 0) {
      found = int(centers.size());
      centers.push_back(i);
      r.mode_sizes.push_back(0);
    }
    r.labels[std::size_t(i)] = found;
    ++r.mode_sizes[std::size_t(found)];
  }
  r.dominant = int(std::max_element(r.mode_sizes.begin(), r.mode_sizes.end()) -
                   r.mode_sizes.begin());
  r.merged_row = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (r.labels[std::size_t(i)] == r.dominant) {
      r.dominant_members.push_back(int(i));
      r.merged_row += x.row(i).transpose();
    }
  }
  r.merged_row /= double(r.dominant_members.size());
  return r;
}

NcutResult segment_ncuts(const AffinityMatrix& affinity) {
  const Eigen::Index p = affinity.rows();
  if (affinity.cols() != p) throw InputError("affinity must be square");
  if ((affinity.array() < 0).any()) throw InputError("affinity must be nonnegative");
  NcutResult r;
  r.labels.assign(std::size_t(p), 0);

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double off = affinity.row(i).sum() - affinity(i, i);
    if (off > 0) {
      active.push_back(i);
    } else {
      r.labels[std::size_t(i)] = 1;
    }
  }
  const Eigen::Index n = Eigen::Index(active.size());
  if (n < 2) {
    r.degenerate = true;
    return r;
  }
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      w(a, b) = a == b ? 0.0 : 0.5 * (affinity(active[a], active[b]) + affinity(active[b], active[a]));
    }
  }
  const Eigen::VectorXd d = w.rowwise().sum();
  const Eigen::VectorXd dinv_sqrt = d.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd lsym = Eigen::MatrixXd::Identity(n, n) -
                               dinv_sqrt.asDiagonal() * w * dinv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lsym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigen decomposition failed");
  const auto& vals = eig.eigenvalues();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  if (n >= 3 && std::abs(vals(2) - vals(1)) < 1e-8) {
    r.degenerate = true;
    for (Eigen::Index k = 0; k < n; ++k) {
      r.labels[std::size_t(active[k])] = k < (n + 1) / 2 ? 0 : 1;
    }
  } else {
    // The trivial direction is D^1/2 * 1; take whichever of the two lowest
    // eigenvectors has more energy orthogonal to it.
    const Eigen::VectorXd u = d.cwiseSqrt().normalized();
    Eigen::VectorXd best;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd v = eig.eigenvectors().col(k);
      v -= v.dot(u) * u;
      if (best.size() == 0 || v.norm() > best.norm()) best = v;
    }
    const Eigen::VectorXd y = dinv_sqrt.cwiseProduct(best);
    for (Eigen::Index k = 0; k < n; ++k) order[std::size_t(k)] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return y(a) < y(b); });
    const double total = d.sum();
    std::vector<char> in_s(std::size_t(n), 0);
    double cut = 0.0, vol = 0.0, best_ncut = INFINITY;
    Eigen::Index best_k = 1;
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      const Eigen::Index i = order[std::size_t(k)];
      double to_s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (in_s[std::size_t(j)]) to_s += w(i, j);
      }
      cut += d(i) - 2.0 * to_s;
      vol += d(i);
      in_s[std::size_t(i)] = 1;
      const double other = total - vol;
      if (vol <= 0 || other <= 0) continue;
      const double value = cut / vol + cut / other;
      if (value < best_ncut - 1e-12) {
        best_ncut = value;
        best_k = k + 1;
      }
    }
    r.ncut = best_ncut;
    for (Eigen::Index k = 0; k < n; ++k) {
      r.labels[std::size_t(active[order[std::size_t(k)]])] = k < best_k ? 0 : 1;
    }
  }
  return r;
}

SpliceMaskResult splice_mask(const FloatMap& consistency, double threshold) {
  SpliceMaskResult r;
  r.mask = Mask(consistency.width, consistency.height);
  std::size_t low = 0;
  for (double v : consistency.values) low += v < threshold;
  const std::size_t high = consistency.size() - low;
  if (low == 0 || high == 0) {
    r.no_candidate = true;
    return r;
  }
  r.splice_is_low = low <= high;
  for (std::size_t i = 0; i < consistency.size(); ++i) {
    const bool is_low = consistency.values[i] < threshold;
    r.mask.bits[i] = is_low == r.splice_is_low;
  }
  return r;
}

double detection_score(const FloatMap& consistency) {
  if (consistency.size() == 0) throw InputError("empty consistency map");
  double s = 0.0;
  for (double v : consistency.values) s += 1.0 - v;
  return s / double(consistency.size());
}

SpliceResult localize(const ImageU8& image, const PairScorer& scorer,
                      const LocalizerOptions& options) {
  SpliceResult r;
  r.grid = plan_grid(image.width, image.height, kPatchSize, options.n_longest);
  r.affinity = compute_affinity(image, scorer, r.grid);
  r.modes = mean_shift(r.affinity, options.mean_shift);
  r.consistency = render_row(r.modes.merged_row, r.grid, image.width, image.height);
  r.mask = splice_mask(r.consistency, options.mask_threshold);
  r.score = detection_score(r.consistency);
  r.ncut = segment_ncuts(r.affinity);
  if (r.grid.size() == 1) r.flags.push_back("single-patch");
  if (r.mask.no_candidate) r.flags.push_back("no-splice-candidate");
  if (r.ncut.degenerate) r.flags.push_back("ncut-degenerate");
  return r;
}

void write_splice_result(const std::filesystem::path& dir, const std::string& stem,
                         const SpliceResult& result, bool dump_affinity,
                         const std::string& config_json) {
  std::filesystem::create_directories(dir);
  save_gray16_png(dir / (stem + ".consistency.png"), result.consistency);
  save_mask_png(dir / (stem + ".mask.png"), result.mask.mask);

  json j;
  j["tool_version"] = version();
  j["image_size"] = {result.consistency.width, result.consistency.height};
  j["grid_shape"] = {result.grid.cols, result.grid.rows};
  j["stride"] = result.grid.stride;
  j["patches"] = result.grid.size();
  j["detection_score"] = result.score;
  j["orientation"] = {
      {"consistency_map", "1 = self-consistent, 0 = inconsistent"},
      {"detection_score", "mean of (1 - consistency); higher = more likely spliced"}};
  j["map_provenance"] = result.grid.size() == 1 ? "single-patch" : "merged";
  j["splice_region"] = result.mask.no_candidate ? "none"
                       : result.mask.splice_is_low ? "below-threshold"
                                                   : "at-or-above-threshold";
  j["flags"] = result.flags;
  j["mean_shift"] = {{"bandwidth", result.modes.bandwidth},
                     {"iterations", result.modes.iterations},
                     {"modes", result.modes.mode_sizes.size()},
                     {"dominant_mode_size", result.modes.dominant_members.size()}};
  j["ncut_labels"] = result.ncut.labels;
  j["config"] = json::parse(config_json);
  write_text(dir / (stem + ".json"), j.dump(2) + "\n");

  if (dump_affinity) {
    const auto p = result.affinity.rows();
    std::vector<std::uint8_t> raw(std::size_t(p * p) * sizeof(float));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index c = 0; c < p; ++c) {
        const float v = float(result.affinity(i, c));
        std::memcpy(raw.data() + k, &v, sizeof v);
        k += sizeof v;
      }
    }
    write_file(dir / (stem + ".affinity.f32"), raw);
    json h;
    h["P"] = p;
    h["order"] = "row-major";
    h["dtype"] = "float32-le";
    h["data"] = stem + ".affinity.f32";
    write_text(dir / (stem + ".affinity.json"), h.dump(2) + "\n");
  }
}

}  // namespace exifcons
