#pragma once

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "r3/error.hpp"

namespace r3::text {

using Trigram = std::array<std::string, 3>;

struct TokenizedText {
  std::string original;
  std::vector<std::string> words;
  std::vector<Trigram> trigrams;

  std::size_t word_count() const { return words.size(); }
};

namespace detail {

inline icu::UnicodeString nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kConfig, "ICU NFC normalizer unavailable");
  }
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString out = normalizer->normalize(src, status);
  if (U_FAILURE(status)) return src;
  return out;
}

}  // namespace detail

/// Words are maximal alphanumeric runs of the NFC-normalized, lowercased text.
inline std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  if (text.empty()) return words;
  const icu::UnicodeString normalized = detail::nfc(text);

  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string utf8;
    current.toUTF8String(utf8);
    words.push_back(std::move(utf8));
    current.remove();
  };
  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isalnum(c)) {
      current.append(u_tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return words;
}

inline TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  out.original = std::string(text);
  out.words = words_of(text);
  if (out.words.size() >= 3) {
    out.trigrams.reserve(out.words.size() - 2);
    for (std::size_t i = 0; i + 2 < out.words.size(); ++i) {
      out.trigrams.push_back({out.words[i], out.words[i + 1], out.words[i + 2]});
    }
  }
  return out;
}

/// LI: word count / 100, uncapped unless `cap` is given.
inline double length_incentive(const TokenizedText& response,
                               std::optional<double> cap = std::nullopt) {
  const double li = static_cast<double>(response.words.size()) / 100.0;
  if (cap && li > *cap) return *cap;
  return li;
}

/// RP: unique trigrams / trigrams. Responses with no trigram score 1.
inline double repetition_penalty(const TokenizedText& response) {
  if (response.trigrams.empty()) return 1.0;
  std::unordered_set<std::string> unique;
  unique.reserve(response.trigrams.size());
  for (const auto& t : response.trigrams) {
    std::string key;
    key.reserve(t[0].size() + t[1].size() + t[2].size() + 2);
    key.append(t[0]).push_back('\x1f');
    key.append(t[1]).push_back('\x1f');
    key.append(t[2]);
    unique.insert(std::move(key));
  }
  return static_cast<double>(unique.size()) /
         static_cast<double>(response.trigrams.size());
}

namespace detail {
inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}
}  // namespace detail

/// Splits after '.', '?' or '!' when followed by whitespace or end of text.
/// No abbreviation handling: "e.g. foo" yields two sentences.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto piece = detail::trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '?' && c != '!') continue;
    if (i + 1 == text.size() || detail::is_space(text[i + 1])) emit(i + 1);
  }
  if (start < text.size()) emit(text.size());
  return out;
}

}  // namespace r3::text
