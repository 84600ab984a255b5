#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/query_type.hpp"
#include "r3/text_metrics.hpp"

namespace r3::eval {

inline constexpr double kDefaultRelevanceThreshold = 0.15;

struct PairwiseOutcome {
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;

  std::size_t total() const { return wins + ties + losses; }
};

/// (#win + 0.5 * #tie) / #all
inline double adjusted_win_rate(const PairwiseOutcome& o) {
  if (o.total() == 0) throw Error(ErrorCode::kInvalidArgument, "win rate of zero comparisons");
  return (static_cast<double>(o.wins) + 0.5 * static_cast<double>(o.ties)) /
         static_cast<double>(o.total());
}

namespace detail {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

inline NgramCounts ngram_counts(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  std::string key;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    key.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key.append(words[i + k]);
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

/// BLEU of `hypothesis` against `references`: clipped n-gram precision for
/// n = 1..max_n with uniform weights, +1 smoothing of numerator and
/// denominator for n >= 2, brevity penalty against the closest reference
/// length (ties go to the shorter one). An empty hypothesis scores 0.
inline double bleu(const std::vector<std::string>& hypothesis,
                   std::span<const std::vector<std::string>* const> references,
                   std::size_t max_n = 4) {
  if (hypothesis.empty() || references.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto hyp = detail::ngram_counts(hypothesis, n);
    detail::NgramCounts max_ref;
    for (const auto* ref : references)
      for (const auto& [g, c] : detail::ngram_counts(*ref, n)) {
        auto& m = max_ref[g];
        m = std::max(m, c);
      }
    std::size_t clipped = 0, total = 0;
    for (const auto& [g, c] : hyp) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    double p;
    if (n == 1) {
      if (clipped == 0) return 0.0;
      p = static_cast<double>(clipped) / static_cast<double>(total);
    } else {
      p = static_cast<double>(clipped + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(p);
  }

  const std::size_t c = hypothesis.size();
  std::size_t r = references.front()->size();
  for (const auto* ref : references) {
    const std::size_t len = ref->size();
    const auto d_new = len > c ? len - c : c - len;
    const auto d_old = r > c ? r - c : c - r;
    if (d_new < d_old || (d_new == d_old && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

struct SelfBleuResult {
  double score = 0.0;
  std::vector<double> per_response;
  std::vector<std::size_t> empty_responses;  // indices that scored 0 for being empty
};

/// Mean BLEU of each response against all the others.
inline SelfBleuResult self_bleu(std::span<const std::string> responses, std::size_t max_n = 4) {
  if (responses.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "self-BLEU needs at least 2 responses");
  std::vector<std::vector<std::string>> toks;
  toks.reserve(responses.size());
  for (const auto& r : responses) toks.push_back(text::words_of(r));

  SelfBleuResult out;
  out.per_response.resize(responses.size(), 0.0);
  std::vector<const std::vector<std::string>*> refs;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].empty()) {
      out.empty_responses.push_back(i);
      continue;
    }
    refs.clear();
    for (std::size_t j = 0; j < toks.size(); ++j)
      if (j != i) refs.push_back(&toks[j]);
    out.per_response[i] = bleu(toks[i], refs, max_n);
  }
  // Summing in sorted order makes the mean exactly permutation-invariant.
  std::vector<double> sorted = out.per_response;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  out.score = sum / static_cast<double>(sorted.size());
  return out;
}

struct SentenceJudgment {
  std::string sentence;
  double score = 0.0;
  bool relevant = false;
  double threshold = kDefaultRelevanceThreshold;
};

struct RelevanceRatio {
  double ratio = 0.0;
  std::vector<SentenceJudgment> judgments;
};

/// Embedder-threshold proxy for a sentence-level relevance judge: each
/// sentence is relevant iff relevance_score(M(query), M(sentence)) >= tau.
inline RelevanceRatio relevant_sentence_ratio(std::string_view query, std::string_view response,
                                              const Embedder& embedder,
                                              double tau = kDefaultRelevanceThreshold,
                                              ScoreMode mode = ScoreMode::kInnerProduct) {
  auto sentences = text::split_sentences(response);
  if (sentences.empty())
    throw Error(ErrorCode::kInvalidArgument, "response has no sentences to judge");
  std::vector<std::string> texts;
  texts.reserve(sentences.size() + 1);
  texts.push_back(last_user_turn(query));
  for (auto& s : sentences) texts.push_back(s);
  const auto vecs = embedder.embed(texts);

  RelevanceRatio out;
  std::size_t relevant = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    SentenceJudgment j;
    j.sentence = std::move(sentences[i]);
    j.score = relevance_score(vecs[0], vecs[i + 1], mode);
    j.threshold = tau;
    j.relevant = j.score >= tau;
    relevant += j.relevant ? 1 : 0;
    out.judgments.push_back(std::move(j));
  }
  out.ratio = static_cast<double>(relevant) / static_cast<double>(out.judgments.size());
  return out;
}

struct LabeledSentence {
  std::string query;
  std::string sentence;
  bool relevant = false;
};

struct ThresholdFit {
  double tau = kDefaultRelevanceThreshold;
  double accuracy = 0.0;
  double margin = 0.0;  // distance from tau to the nearest labeled score
};

/// Fits tau for relevant_sentence_ratio on labeled (query, sentence) pairs:
/// candidates are midpoints between consecutive distinct scores (plus one
/// step beyond each end); the most accurate wins, ties go to the larger
/// margin, then the smaller tau.
inline ThresholdFit fit_threshold(std::span<const LabeledSentence> labeled, const Embedder& embedder,
                                  ScoreMode mode = ScoreMode::kInnerProduct) {
  if (labeled.empty()) throw Error(ErrorCode::kInvalidArgument, "threshold fit needs labeled sentences");
  std::vector<std::string> texts;
  texts.reserve(labeled.size() * 2);
  for (const auto& l : labeled) {
    texts.push_back(last_user_turn(l.query));
    texts.push_back(l.sentence);
  }
  const auto vecs = embedder.embed(texts);
  std::vector<double> scores(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i)
    scores[i] = relevance_score(vecs[2 * i], vecs[2 * i + 1], mode);

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{sorted.front() - 0.05, sorted.back() + 0.05};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));

  ThresholdFit best;
  bool have = false;
  for (double tau : candidates) {
    std::size_t right = 0;
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      right += (scores[i] >= tau) == labeled[i].relevant ? 1 : 0;
      margin = std::min(margin, std::abs(scores[i] - tau));
    }
    const double acc = static_cast<double>(right) / static_cast<double>(labeled.size());
    const bool better = !have || acc > best.accuracy ||
                        (acc == best.accuracy && margin > best.margin) ||
                        (acc == best.accuracy && margin == best.margin && tau < best.tau);
    if (better) best = {tau, acc, margin};
    have = true;
  }
  return best;
}

struct LengthStats {
  double mean_words = 0.0;
  double mean_sentences = 0.0;
};

inline LengthStats length_stats(std::span<const std::string> responses) {
  LengthStats s;
  if (responses.empty()) return s;
  std::size_t words = 0, sentences = 0;
  for (const auto& r : responses) {
    words += text::words_of(r).size();
    sentences += text::split_sentences(r).size();
  }
  s.mean_words = static_cast<double>(words) / static_cast<double>(responses.size());
  s.mean_sentences = static_cast<double>(sentences) / static_cast<double>(responses.size());
  return s;
}

/// One row per sentence position (1-based) across many judged responses.
struct SentenceOrderRow {
  std::size_t position = 0;
  std::size_t sentences = 0;
  std::size_t relevant = 0;
  double ratio() const {
    return sentences ? static_cast<double>(relevant) / static_cast<double>(sentences) : 0.0;
  }
};

inline std::vector<SentenceOrderRow> sentence_order_table(
    std::span<const RelevanceRatio> judged) {
  std::map<std::size_t, SentenceOrderRow> rows;
  for (const auto& r : judged)
    for (std::size_t i = 0; i < r.judgments.size(); ++i) {
      auto& row = rows[i + 1];
      row.position = i + 1;
      ++row.sentences;
      row.relevant += r.judgments[i].relevant ? 1 : 0;
    }
  std::vector<SentenceOrderRow> out;
  for (auto& [_, row] : rows) out.push_back(row);
  return out;
}

inline std::string sentence_order_csv(std::span<const SentenceOrderRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "position,sentences,relevant,ratio\n";
  for (const auto& r : rows)
    os << r.position << ',' << r.sentences << ',' << r.relevant << ',' << r.ratio() << '\n';
  return os.str();
}

}  // namespace r3::eval
