#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/text_metrics.hpp"

namespace r3 {

/// F: affine map from the r_y range [src_lo, src_hi] onto the LI range
/// [dst_lo, dst_hi], clamped outside the source range.
struct CalibrationMap {
  double src_lo = 0.0;
  double src_hi = 1.0;
  double dst_lo = 0.0;
  double dst_hi = 1.0;
  double percentile_lo = 5.0;
  double percentile_hi = 95.0;
  std::size_t embedder_dim = 0;

  void validate() const {
    if (!(src_lo < src_hi))
      throw Error(ErrorCode::kDegenerateRange, "calibration map requires src_lo < src_hi");
    if (!(dst_lo <= dst_hi))
      throw Error(ErrorCode::kInvalidArgument, "calibration map requires dst_lo <= dst_hi");
  }

  double apply(double r_y) const {
    if (r_y <= src_lo) return dst_lo;
    if (r_y >= src_hi) return dst_hi;
    const double t = (r_y - src_lo) / (src_hi - src_lo);
    return dst_lo + t * (dst_hi - dst_lo);
  }

  friend bool operator==(const CalibrationMap&, const CalibrationMap&) = default;
};

inline double apply_calibration(const CalibrationMap& map, double r_y) { return map.apply(r_y); }

/// Percentile with linear interpolation between order statistics
/// (rank = p/100 * (n-1)). `sorted` must be ascending and nonempty.
inline double percentile_sorted(std::span<const double> sorted, double p) {
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kMinCalibrationPairs = 20;

/// Fits F from r_y scores of (reference, response) pairs and the LI values of
/// a response sample, using the (p_lo, p_hi) percentiles of each.
inline CalibrationMap fit_calibration(std::span<const double> ry_scores,
                                      std::span<const double> li_values, double p_lo = 5.0,
                                      double p_hi = 95.0, std::size_t embedder_dim = 0) {
  if (ry_scores.size() < kMinCalibrationPairs)
    throw Error(ErrorCode::kInvalidArgument,
                "calibration corpus needs at least " + std::to_string(kMinCalibrationPairs) +
                    " pairs, got " + std::to_string(ry_scores.size()));
  if (li_values.empty()) throw Error(ErrorCode::kInvalidArgument, "calibration needs responses");
  if (!(p_lo >= 0.0 && p_hi <= 100.0 && p_lo < p_hi))
    throw Error(ErrorCode::kInvalidArgument, "calibration percentiles must satisfy 0 <= lo < hi <= 100");

  std::vector<double> ry(ry_scores.begin(), ry_scores.end());
  std::vector<double> li(li_values.begin(), li_values.end());
  std::sort(ry.begin(), ry.end());
  std::sort(li.begin(), li.end());

  CalibrationMap map;
  map.src_lo = percentile_sorted(ry, p_lo);
  map.src_hi = percentile_sorted(ry, p_hi);
  map.dst_lo = percentile_sorted(li, p_lo);
  map.dst_hi = percentile_sorted(li, p_hi);
  map.percentile_lo = p_lo;
  map.percentile_hi = p_hi;
  map.embedder_dim = embedder_dim;
  if (!(map.src_lo < map.src_hi))
    throw Error(ErrorCode::kDegenerateRange,
                "r_y percentile range is degenerate (" + std::to_string(map.src_lo) +
                    "); use a larger or more varied calibration corpus");
  return map;
}

struct CalibrationPair {
  std::string reference;
  std::string response;
};

/// Convenience: scores r_y = M(reference) . M(response) and LI(response) for
/// every pair, then fits.
inline CalibrationMap fit_calibration(const Embedder& embedder,
                                      std::span<const CalibrationPair> pairs, double p_lo = 5.0,
                                      double p_hi = 95.0) {
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    texts.push_back(p.reference);
    texts.push_back(p.response);
  }
  const auto vecs = embedder.embed(texts);
  std::vector<double> ry, li;
  ry.reserve(pairs.size());
  li.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ry.push_back(relevance_score(vecs[2 * i], vecs[2 * i + 1]));
    li.push_back(text::length_incentive(text::tokenize(pairs[i].response)));
  }
  return fit_calibration(ry, li, p_lo, p_hi, embedder.dim());
}

}  // namespace r3
