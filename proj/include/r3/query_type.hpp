#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "r3/error.hpp"
#include "r3/rng.hpp"
#include "r3/text_metrics.hpp"

namespace r3 {

enum class QueryType { kOpenEnded, kClosedEnded };

/// Interface serialization.
inline std::string_view to_label(QueryType t) {
  return t == QueryType::kOpenEnded ? "OPEN-ENDED" : "CLOSED-ENDED";
}

/// Short form used in breakdowns ("OE"/"CE").
inline std::string_view to_short(QueryType t) { return t == QueryType::kOpenEnded ? "OE" : "CE"; }

inline std::optional<QueryType> parse_query_type(std::string_view s) {
  if (s == "OPEN-ENDED" || s == "OE") return QueryType::kOpenEnded;
  if (s == "CLOSED-ENDED" || s == "CE") return QueryType::kClosedEnded;
  return std::nullopt;
}

namespace detail {

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char a = s[i];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (a != prefix[i]) return false;
  }
  return true;
}

}  // namespace detail

/// Returns the last user turn of a multi-turn transcript. Turns start with a
/// line beginning "Human:" or "User:" (user) or "Assistant:" (assistant),
/// case-insensitive. Text without any marker is a single user turn.
inline std::string last_user_turn(std::string_view conversation) {
  std::optional<std::string> last_user;
  std::string current;
  bool in_user = false;
  bool seen_marker = false;

  auto close_turn = [&] {
    if (in_user) last_user = std::string(text::detail::trim(current));
    current.clear();
  };

  std::size_t pos = 0;
  while (pos <= conversation.size()) {
    std::size_t eol = conversation.find('\n', pos);
    if (eol == std::string_view::npos) eol = conversation.size();
    std::string_view line = conversation.substr(pos, eol - pos);
    std::string_view body = text::detail::trim(line);

    std::optional<bool> marker_is_user;
    std::size_t marker_len = 0;
    for (auto [m, user] : {std::pair{std::string_view("human:"), true},
                           std::pair{std::string_view("user:"), true},
                           std::pair{std::string_view("assistant:"), false}}) {
      if (detail::starts_with_ci(body, m)) {
        marker_is_user = user;
        marker_len = m.size();
        break;
      }
    }
    if (marker_is_user) {
      close_turn();
      seen_marker = true;
      in_user = *marker_is_user;
      current.append(body.substr(marker_len));
    } else {
      if (!current.empty()) current.push_back('\n');
      current.append(line);
    }
    pos = eol + 1;
  }
  close_turn();
  if (!seen_marker) return std::string(text::detail::trim(conversation));
  return last_user.value_or("");
}

/// Rule-based OE/CE decision on the first clause of the last user turn.
inline QueryType classify_heuristic(std::string_view query) {
  const std::string turn = last_user_turn(query);
  std::size_t clause_end = turn.find_first_of(",.;:?!\n");
  const auto words = text::words_of(std::string_view(turn).substr(0, clause_end));

  auto starts_with = [&](std::string_view phrase) {
    const auto pw = text::words_of(phrase);
    if (pw.size() > words.size()) return false;
    for (std::size_t i = 0; i < pw.size(); ++i)
      if (pw[i] != words[i]) return false;
    return true;
  };

  // Requests for suggestions are open-ended even though they start with a
  // closed-ended wh- prefix.
  static constexpr std::array<std::string_view, 5> kOpenOverrides = {
      "what are some", "what are good", "what are the best", "what is a good",
      "what is the best"};
  for (auto p : kOpenOverrides)
    if (starts_with(p)) return QueryType::kOpenEnded;

  static constexpr std::array<std::string_view, 24> kClosedPrefixes = {
      "how many", "how much", "how do you", "how does", "what is",  "what was",
      "what are", "what does", "what age",  "what year", "what time", "when",
      "who",      "where",     "which",     "is",        "are",       "do",
      "does",     "did",       "can",       "will",      "was",       "were"};
  for (auto p : kClosedPrefixes)
    if (starts_with(p)) return QueryType::kClosedEnded;
  return QueryType::kOpenEnded;
}

/// Seeded 50/50 draw keyed on (seed, query).
inline QueryType classify_random(std::string_view query, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ fnv1a64(query));
  return (h >> 63) == 0 ? QueryType::kOpenEnded : QueryType::kClosedEnded;
}

}  // namespace r3
