#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/rng.hpp"
#include "r3/text_metrics.hpp"

namespace r3::synrel {

struct EntityRecord {
  std::string entity;
  std::vector<std::string> properties;
};

struct RelevanceTriplet {
  std::string query;
  std::string chosen;
  std::string rejected;
  std::string chosen_entity;
  std::string rejected_entity;

  friend bool operator==(const RelevanceTriplet&, const RelevanceTriplet&) = default;
};

inline constexpr std::size_t kChosenProperties = 2;
inline constexpr std::size_t kLengthRatio = 3;
inline constexpr std::size_t kMaxCycles = 10;
inline constexpr std::size_t kNegativeDraws = 32;

inline std::string make_query(std::string_view entity) {
  return "Please tell me about " + std::string(entity);
}

namespace detail {

// Cycle 0 states the property plainly; later cycles elaborate so the
// negative reads as long, fluent and off-topic.
inline constexpr std::array<std::string_view, 5> kTemplates = {
    "{e} is {p}.",
    "It is widely noted that {e} is {p}.",
    "Many accounts describe how {e} is {p}.",
    "Historians and enthusiasts often repeat that {e} is {p}.",
    "In most references, {e} is {p}.",
};

inline std::string fill(std::string_view tmpl, std::string_view entity, std::string_view prop) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl.substr(i, 3) == "{e}") {
      out.append(entity);
      i += 2;
    } else if (tmpl.substr(i, 3) == "{p}") {
      out.append(prop);
      i += 2;
    } else {
      out.push_back(tmpl[i]);
    }
  }
  return out;
}

inline std::set<std::string> token_set(std::string_view s) {
  auto w = text::words_of(s);
  return {w.begin(), w.end()};
}

inline bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& x : a)
    if (b.count(x)) return false;
  return true;
}

}  // namespace detail

/// Builds `n` adversarial triplets: a short answer compiled from the queried
/// entity's properties versus a >= 3x longer answer about a different entity.
/// Entities whose negative cannot reach the length ratio within 10 cycles, or
/// for which no token-disjoint negative is found, are skipped and reported in
/// `warnings`; generation continues with the next entity in the seeded order.
inline std::vector<RelevanceTriplet> generate(const std::vector<EntityRecord>& entities,
                                              std::size_t n, std::uint64_t seed,
                                              std::vector<std::string>* warnings = nullptr) {
  if (entities.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "synrel generation needs at least 2 entities");
  if (n > entities.size())
    throw Error(ErrorCode::kInvalidArgument,
                "requested " + std::to_string(n) + " triplets from " +
                    std::to_string(entities.size()) + " entities");
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    if (e.entity.empty() || e.properties.empty())
      throw Error(ErrorCode::kInvalidArgument,
                  "entity record " + std::to_string(i) + " needs a name and >= 1 property");
  }

  Rng rng(seed);
  std::vector<std::size_t> order(entities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  std::vector<RelevanceTriplet> out;
  out.reserve(n);
  for (std::size_t idx : order) {
    if (out.size() == n) break;
    const auto& chosen = entities[idx];
    const auto chosen_tokens = detail::token_set(chosen.entity);

    RelevanceTriplet t;
    t.query = make_query(chosen.entity);
    t.chosen_entity = chosen.entity;
    for (std::size_t k = 0; k < std::min(kChosenProperties, chosen.properties.size()); ++k) {
      if (k) t.chosen.push_back(' ');
      t.chosen += detail::fill(detail::kTemplates[0], chosen.entity, chosen.properties[k]);
    }
    const std::size_t target = kLengthRatio * text::words_of(t.chosen).size();

    bool built = false;
    bool skipped = false;
    for (std::size_t draw = 0; draw < kNegativeDraws && !built; ++draw) {
      std::size_t j = rng.index(entities.size() - 1);
      if (j >= idx) ++j;
      const auto& other = entities[j];
      if (!detail::disjoint(chosen_tokens, detail::token_set(other.entity))) continue;

      std::string rejected;
      std::size_t words = 0;
      for (std::size_t cycle = 0; cycle < kMaxCycles && words < target; ++cycle) {
        const auto tmpl = detail::kTemplates[cycle % detail::kTemplates.size()];
        for (const auto& p : other.properties) {
          if (!rejected.empty()) rejected.push_back(' ');
          rejected += detail::fill(tmpl, other.entity, p);
          words = text::words_of(rejected).size();
          if (words >= target) break;
        }
      }
      if (words < target) {
        warn("skipping entity \"" + chosen.entity + "\": negative \"" + other.entity +
             "\" cannot reach the length ratio within " + std::to_string(kMaxCycles) + " cycles");
        skipped = true;
        break;
      }
      if (!detail::disjoint(chosen_tokens, detail::token_set(rejected))) continue;
      t.rejected = std::move(rejected);
      t.rejected_entity = other.entity;
      built = true;
    }
    if (built) {
      out.push_back(std::move(t));
    } else if (!skipped) {
      warn("skipping entity \"" + chosen.entity + "\": no usable negative entity");
    }
  }
  return out;
}

using Scorer = std::function<double(std::string_view query, std::string_view response)>;

/// (#{s(q,chosen) > s(q,rejected)} + 0.5 #ties) / #triplets
inline double evaluate_accuracy(const std::vector<RelevanceTriplet>& triplets,
                                const Scorer& scorer) {
  if (triplets.empty()) throw Error(ErrorCode::kInvalidArgument, "no triplets to evaluate");
  double credit = 0.0;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    double sc, sr;
    try {
      sc = scorer(t.query, t.chosen);
      sr = scorer(t.query, t.rejected);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  "scorer failed on triplet " + std::to_string(i) + ": " + e.what());
    }
    if (sc > sr) credit += 1.0;
    else if (sc == sr) credit += 0.5;
  }
  return credit / static_cast<double>(triplets.size());
}

/// r_x under the given embedder.
inline Scorer relevance_scorer(const Embedder& embedder) {
  return [&embedder](std::string_view q, std::string_view r) {
    std::vector<std::string> texts{std::string(q), std::string(r)};
    const auto v = embedder.embed(texts);
    return relevance_score(v[0], v[1]);
  };
}

inline Scorer length_scorer() {
  return [](std::string_view, std::string_view r) {
    return static_cast<double>(text::words_of(r).size());
  };
}

}  // namespace r3::synrel
