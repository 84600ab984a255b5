#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "r3/calibration.hpp"
#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/query_type.hpp"
#include "r3/text_metrics.hpp"

namespace r3 {

enum class RewardVariant { kR3, kR3OE, kRxOnly, kLiRp, kLiOnly };

inline std::string_view to_string(RewardVariant v) {
  switch (v) {
    case RewardVariant::kR3: return "R3";
    case RewardVariant::kR3OE: return "R3_OE";
    case RewardVariant::kRxOnly: return "RX_ONLY";
    case RewardVariant::kLiRp: return "LI_RP";
    case RewardVariant::kLiOnly: return "LI_ONLY";
  }
  return "R3";
}

/// Case-insensitive; accepts "r3", "r3_oe", "rx_only", "li_rp", "li_only".
inline std::optional<RewardVariant> parse_variant(std::string_view s) {
  std::string up(s);
  for (auto& c : up) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    if (c == '-') c = '_';
  }
  for (auto v : {RewardVariant::kR3, RewardVariant::kR3OE, RewardVariant::kRxOnly,
                 RewardVariant::kLiRp, RewardVariant::kLiOnly})
    if (up == to_string(v)) return v;
  return std::nullopt;
}

enum class Branch { kOE, kCE, kNA };

inline std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::kOE: return "OE";
    case Branch::kCE: return "CE";
    case Branch::kNA: return "n/a";
  }
  return "n/a";
}

struct RewardOptions {
  ScoreMode score_mode = ScoreMode::kInnerProduct;
  // false reproduces the r_x * LI ablation (RP still reported, not applied).
  bool apply_repetition_penalty = true;
  std::optional<double> li_cap;
};

struct RewardBreakdown {
  double r_x = 0.0;
  std::optional<double> r_y;
  double li = 0.0;
  double rp = 1.0;
  std::optional<double> f_of_ry;
  Branch branch = Branch::kNA;
  double final_reward = 0.0;
  RewardVariant variant = RewardVariant::kR3;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline double clamp0(double v) { return v > 0.0 ? v : 0.0; }

/// Core of the composite. All embeddings are precomputed; the query vector
/// must embed the last user turn.
///
///   R3      OE: max(r_x,0) * LI * RP        CE: max(F(r_y),0) * RP
///   R3_OE   max(r_x,0) * LI * RP regardless of query type
///   RX_ONLY r_x
///   LI_RP   LI * RP
///   LI_ONLY LI
inline RewardBreakdown score_embedded(std::string_view query_text, QueryType query_type,
                                      const EmbeddingVector& query_vec,
                                      const text::TokenizedText& response,
                                      const EmbeddingVector& response_vec,
                                      const EmbeddingVector* reference_vec, RewardVariant variant,
                                      const CalibrationMap* map, const RewardOptions& opts = {}) {
  RewardBreakdown b;
  b.variant = variant;
  b.r_x = relevance_score(query_vec, response_vec, opts.score_mode);
  if (reference_vec) b.r_y = relevance_score(*reference_vec, response_vec, opts.score_mode);
  b.li = text::length_incentive(response, opts.li_cap);
  b.rp = text::repetition_penalty(response);
  if (b.r_y && map) b.f_of_ry = map->apply(*b.r_y);
  const double rp = opts.apply_repetition_penalty ? b.rp : 1.0;

  switch (variant) {
    case RewardVariant::kR3:
      if (query_type == QueryType::kOpenEnded) {
        b.branch = Branch::kOE;
        b.final_reward = clamp0(b.r_x) * b.li * rp;
      } else {
        b.branch = Branch::kCE;
        if (!b.r_y)
          throw Error(ErrorCode::kReferenceRequired,
                      "closed-ended query requires a reference under R3: \"" +
                          std::string(query_text.substr(0, 120)) + "\"");
        if (!map)
          throw Error(ErrorCode::kCalibrationRequired,
                      "closed-ended query requires a calibration map under R3");
        b.final_reward = clamp0(*b.f_of_ry) * rp;
      }
      break;
    case RewardVariant::kR3OE:
      b.branch = Branch::kOE;
      b.final_reward = clamp0(b.r_x) * b.li * rp;
      break;
    case RewardVariant::kRxOnly:
      b.final_reward = b.r_x;
      break;
    case RewardVariant::kLiRp:
      b.final_reward = b.li * rp;
      break;
    case RewardVariant::kLiOnly:
      b.final_reward = b.li;
      break;
  }
  if (!std::isfinite(b.final_reward))
    throw Error(ErrorCode::kNonFinite, "non-finite reward");
  return b;
}

/// Text-level entry point: embeds the last user turn of `query`, the response
/// and (if given) the reference in one batch.
inline RewardBreakdown score(std::string_view query, QueryType query_type,
                             std::string_view response,
                             const std::optional<std::string>& reference, RewardVariant variant,
                             const Embedder& embedder, const CalibrationMap* map,
                             const RewardOptions& opts = {}) {
  if (variant == RewardVariant::kR3 && query_type == QueryType::kClosedEnded) {
    if (!reference)
      throw Error(ErrorCode::kReferenceRequired,
                  "closed-ended query requires a reference under R3: \"" +
                      std::string(query.substr(0, 120)) + "\"");
    if (!map)
      throw Error(ErrorCode::kCalibrationRequired,
                  "closed-ended query requires a calibration map under R3");
  }
  std::vector<std::string> texts{last_user_turn(query), std::string(response)};
  if (reference) texts.push_back(*reference);
  const auto vecs = embedder.embed(texts);
  const auto tok = text::tokenize(response);
  return score_embedded(query, query_type, vecs[0], tok, vecs[1], reference ? &vecs[2] : nullptr,
                        variant, map, opts);
}

}  // namespace r3
