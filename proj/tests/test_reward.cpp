#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "r3/calibration.hpp"
#include "r3/json_io.hpp"
#include "r3/reward.hpp"
#include "test_support.hpp"

namespace {

using r3::CalibrationMap;
using r3::EmbeddingVector;
using r3::QueryType;
using r3::RewardVariant;

template <typename F>
r3::ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const r3::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected r3::Error";
  return r3::ErrorCode::kIo;
}

// Tokenized text with a chosen word count and trigram multiset.
r3::text::TokenizedText synthetic_tokens(std::size_t words, std::size_t trigrams, std::size_t unique) {
  r3::text::TokenizedText t;
  t.words.assign(words, "w");
  for (std::size_t i = 0; i < trigrams; ++i) {
    const auto k = std::to_string(i < unique ? i : 0);
    t.trigrams.push_back({k, k, k});
  }
  return t;
}

// Percentile oracle: linear interpolation between order statistics found by
// nth_element instead of a full sort.
double percentile_oracle(std::vector<double> v, double p) {
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
  const double a = v[lo];
  if (rank == std::floor(rank)) return a;
  const double b = *std::min_element(v.begin() + static_cast<long>(lo) + 1, v.end());
  return a + (rank - std::floor(rank)) * (b - a);
}

TEST(Calibration, UniformEndpoints) {
  std::vector<double> ry, li;
  for (int i = 0; i <= 1000; ++i) {
    ry.push_back(i / 1000.0);
    li.push_back(5.0 * i / 1000.0);
  }
  const auto m = r3::fit_calibration(ry, li, 0.0, 100.0);
  EXPECT_EQ(m.src_lo, 0.0);
  EXPECT_EQ(m.src_hi, 1.0);
  EXPECT_EQ(m.dst_lo, 0.0);
  EXPECT_EQ(m.dst_hi, 5.0);
}

TEST(Calibration, DegenerateRange) {
  const std::vector<double> ry(50, 0.3), li(50, 1.0);
  EXPECT_EQ(code_of([&] { r3::fit_calibration(ry, li); }), r3::ErrorCode::kDegenerateRange);
}

TEST(Calibration, Preconditions) {
  const std::vector<double> few(19, 0.1), li(19, 1.0);
  EXPECT_EQ(code_of([&] { r3::fit_calibration(few, li); }), r3::ErrorCode::kInvalidArgument);
  std::vector<double> ry;
  for (int i = 0; i < 30; ++i) ry.push_back(i);
  EXPECT_EQ(code_of([&] { r3::fit_calibration(ry, li, 95.0, 5.0); }), r3::ErrorCode::kInvalidArgument);
}

TEST(Calibration, SyntheticPercentilesMatchOracleAndAnalytic) {
  r3::Rng rng(99);
  std::vector<double> ry, li;
  for (int i = 0; i < 1000; ++i) {
    ry.push_back(rng.uniform());              // U[0,1]: 5/95 pct at 0.05/0.95
    li.push_back(2.0 + 3.0 * rng.uniform());  // U[2,5]: 5/95 pct at 2.15/4.85
  }
  const auto m = r3::fit_calibration(ry, li);
  EXPECT_EQ(m.src_lo, percentile_oracle(ry, 5.0));
  EXPECT_EQ(m.src_hi, percentile_oracle(ry, 95.0));
  EXPECT_EQ(m.dst_lo, percentile_oracle(li, 5.0));
  EXPECT_EQ(m.dst_hi, percentile_oracle(li, 95.0));
  EXPECT_NEAR(m.src_lo, 0.05, 0.05);
  EXPECT_NEAR(m.src_hi, 0.95, 0.05);
  EXPECT_NEAR(m.dst_lo, 2.15, 0.05);
  EXPECT_NEAR(m.dst_hi, 4.85, 0.05);
}

TEST(Calibration, FitFromTextPairs) {
  r3::HashedEmbedder e;
  r3::Rng rng(5);
  std::vector<r3::CalibrationPair> pairs;
  for (int i = 0; i < 40; ++i)
    pairs.push_back({r3::testing::random_text(rng, 8), r3::testing::random_text(rng, 1 + rng.index(60))});
  const auto m = r3::fit_calibration(e, pairs);
  EXPECT_EQ(m.embedder_dim, 1024u);
  EXPECT_LT(m.src_lo, m.src_hi);
  EXPECT_LE(m.dst_lo, m.dst_hi);
}

TEST(ApplyCalibration, Examples) {
  const CalibrationMap m{0.2, 0.8, 0.0, 4.0};
  // 0.2 and 0.8 are not binary fractions, so the midpoint is exact to 1e-12.
  EXPECT_NEAR(r3::apply_calibration(m, 0.5), 2.0, 1e-12);
  EXPECT_EQ(r3::apply_calibration(m, 0.9), 4.0);
  EXPECT_EQ(r3::apply_calibration(m, 0.2), 0.0);
  const CalibrationMap b{0.25, 0.75, 0.0, 4.0};
  EXPECT_EQ(r3::apply_calibration(b, 0.5), 2.0);
}

TEST(ApplyCalibration, MonotoneAndBounded) {
  r3::Rng rng(17);
  for (int k = 0; k < 50; ++k) {
    const double lo = rng.uniform(), hi = lo + 0.01 + rng.uniform();
    const double dlo = 3.0 * rng.uniform(), dhi = dlo + 3.0 * rng.uniform();
    const CalibrationMap m{lo, hi, dlo, dhi};
    double prev = -INFINITY;
    for (double x = lo - 1.0; x <= hi + 1.0; x += 0.01) {
      const double y = m.apply(x);
      EXPECT_GE(y, prev);
      EXPECT_GE(y, dlo);
      EXPECT_LE(y, dhi);
      prev = y;
    }
  }
}

TEST(ApplyCalibration, JsonRoundTrip) {
  const CalibrationMap m{0.125, 0.8, 0.1, 3.3, 5.0, 95.0, 1024};
  EXPECT_EQ(r3::io::calibration_from_json(r3::io::to_json(m)), m);
  EXPECT_EQ(code_of([] { r3::io::calibration_from_json(nlohmann::json{{"src_lo", 1}}); }),
            r3::ErrorCode::kMalformedInput);
}

const EmbeddingVector kQ{{1.0f, 0.0f}};
const EmbeddingVector kHalf{{0.5f, 0.75f}};  // r_x = 0.5 against kQ

TEST(Score, R3OpenEndedProduct) {
  const auto tok = synthetic_tokens(200, 10, 9);  // li 2.0, rp 0.9
  const auto b = r3::score_embedded("q", QueryType::kOpenEnded, kQ, tok, kHalf, nullptr,
                                    RewardVariant::kR3, nullptr);
  EXPECT_EQ(b.r_x, 0.5);
  EXPECT_EQ(b.li, 2.0);
  EXPECT_EQ(b.rp, 0.9);
  EXPECT_EQ(b.branch, r3::Branch::kOE);
  EXPECT_EQ(b.final_reward, 0.9);
}

TEST(Score, R3ClosedEndedProduct) {
  const CalibrationMap m{0.0, 1.0, 0.0, 3.0};
  const auto tok = synthetic_tokens(12, 5, 4);  // rp 0.8
  const EmbeddingVector ref{{0.0f, 1.0f}};
  const EmbeddingVector resp{{0.0f, 0.5f}};  // r_y = 0.5, F = 1.5
  const auto b = r3::score_embedded("q", QueryType::kClosedEnded, kQ, tok, resp, &ref,
                                    RewardVariant::kR3, &m);
  ASSERT_TRUE(b.f_of_ry);
  EXPECT_EQ(*b.f_of_ry, 1.5);
  EXPECT_EQ(b.branch, r3::Branch::kCE);
  EXPECT_NEAR(b.final_reward, 1.2, 1e-12);
}

TEST(Score, QueryCopyIsSuppressedByLength) {
  r3::HashedEmbedder e;
  const std::string q = "please describe the long history of the old river town";
  ASSERT_EQ(r3::text::words_of(q).size(), 10u);
  const auto b = r3::score(q, QueryType::kOpenEnded, q, std::nullopt, RewardVariant::kR3, e, nullptr);
  // Float32 unit vectors: self-similarity is 1 up to single-precision rounding.
  EXPECT_NEAR(b.r_x, 1.0, 1e-6);
  EXPECT_EQ(b.li, 0.1);
  EXPECT_LE(b.final_reward, 0.1 * (1.0 + 1e-6));
}

TEST(Score, CeErrors) {
  r3::HashedEmbedder e;
  const CalibrationMap m{0.0, 1.0, 0.0, 1.0};
  try {
    r3::score("Who wrote Hamlet?", QueryType::kClosedEnded, "Shakespeare", std::nullopt,
              RewardVariant::kR3, e, &m);
    FAIL();
  } catch (const r3::Error& err) {
    EXPECT_EQ(err.code(), r3::ErrorCode::kReferenceRequired);
    EXPECT_NE(std::string(err.what()).find("Who wrote Hamlet?"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] {
              r3::score("Who wrote Hamlet?", QueryType::kClosedEnded, "Shakespeare",
                        std::string("Shakespeare wrote it"), RewardVariant::kR3, e, nullptr);
            }),
            r3::ErrorCode::kCalibrationRequired);
  // Other variants need neither.
  EXPECT_NO_THROW(r3::score("Who wrote Hamlet?", QueryType::kClosedEnded, "Shakespeare",
                            std::nullopt, RewardVariant::kR3OE, e, nullptr));
}

TEST(Score, VariantAlgebraOnExactComponents) {
  const auto tok = synthetic_tokens(50, 4, 3);  // li 0.5, rp 0.75
  auto run = [&](RewardVariant v, QueryType qt = QueryType::kOpenEnded) {
    return r3::score_embedded("q", qt, kQ, tok, kHalf, nullptr, v, nullptr).final_reward;
  };
  EXPECT_EQ(run(RewardVariant::kR3), 0.5 * 0.5 * 0.75);
  EXPECT_EQ(run(RewardVariant::kR3OE, QueryType::kClosedEnded), 0.5 * 0.5 * 0.75);
  EXPECT_EQ(run(RewardVariant::kRxOnly), 0.5);
  EXPECT_EQ(run(RewardVariant::kLiRp), 0.5 * 0.75);
  EXPECT_EQ(run(RewardVariant::kLiOnly), 0.5);
}

TEST(Score, DisabledRepetitionPenaltyStillReported) {
  const auto tok = synthetic_tokens(50, 4, 2);
  r3::RewardOptions o;
  o.apply_repetition_penalty = false;
  const auto b = r3::score_embedded("q", QueryType::kOpenEnded, kQ, tok, kHalf, nullptr,
                                    RewardVariant::kR3OE, nullptr, o);
  EXPECT_EQ(b.rp, 0.5);
  EXPECT_EQ(b.final_reward, 0.5 * 0.5);
}

TEST(Score, MultiTurnUsesLastUserTurn) {
  r3::HashedEmbedder e;
  const std::string convo = "Human: tell me about cats\nAssistant: ok\nHuman: tell me about dogs";
  const auto a = r3::score(convo, QueryType::kOpenEnded, "dogs are loyal", std::nullopt,
                           RewardVariant::kRxOnly, e, nullptr);
  const auto b = r3::score("tell me about dogs", QueryType::kOpenEnded, "dogs are loyal",
                           std::nullopt, RewardVariant::kRxOnly, e, nullptr);
  EXPECT_EQ(a.r_x, b.r_x);
}

TEST(Score, ParseVariant) {
  EXPECT_EQ(r3::parse_variant("rx_only"), RewardVariant::kRxOnly);
  EXPECT_EQ(r3::parse_variant("li-rp"), RewardVariant::kLiRp);
  EXPECT_EQ(r3::parse_variant("R3_OE"), RewardVariant::kR3OE);
  EXPECT_FALSE(r3::parse_variant("r4"));
}

class RewardProperties : public ::testing::Test {
 protected:
  r3::HashedEmbedder e;
  r3::Rng rng{2024};
  CalibrationMap map{0.0, 0.6, 0.1, 2.0};
};

TEST_F(RewardProperties, EmptyResponseScoresZeroOnOpenEnded) {
  for (auto v : {RewardVariant::kR3, RewardVariant::kR3OE}) {
    const auto b = r3::score("some query here", QueryType::kOpenEnded, "", std::nullopt, v, e, nullptr);
    EXPECT_EQ(b.r_x, 0.0);
    EXPECT_EQ(b.final_reward, 0.0);
  }
}

TEST_F(RewardProperties, NegativeRelevanceClampsToZero) {
  const EmbeddingVector neg{{-0.5f, 0.5f}};
  const auto tok = synthetic_tokens(30, 28, 28);
  const auto b = r3::score_embedded("q", QueryType::kOpenEnded, kQ, tok, neg, nullptr,
                                    RewardVariant::kR3, nullptr);
  EXPECT_LT(b.r_x, 0.0);
  EXPECT_EQ(b.final_reward, 0.0);
  const CalibrationMap below{0.0, 1.0, -1.0, 1.0};
  const auto c = r3::score_embedded("q", QueryType::kClosedEnded, kQ, tok, neg, &kQ,
                                    RewardVariant::kR3, &below);
  EXPECT_LT(*c.f_of_ry, 0.0);
  EXPECT_EQ(c.final_reward, 0.0);
}

TEST_F(RewardProperties, VariantCrossChecks) {
  for (int i = 0; i < 200; ++i) {
    const auto q = r3::testing::random_text(rng, 3 + rng.index(10));
    const auto r = r3::testing::random_text(rng, rng.index(60));
    const std::optional<std::string> ref = r3::testing::random_text(rng, 5 + rng.index(20));
    const auto r3oe = r3::score(q, QueryType::kOpenEnded, r, ref, RewardVariant::kR3, e, &map);
    const auto oe = r3::score(q, QueryType::kOpenEnded, r, ref, RewardVariant::kR3OE, e, &map);
    EXPECT_EQ(r3oe.final_reward, oe.final_reward);
    const auto li = r3::score(q, QueryType::kClosedEnded, r, ref, RewardVariant::kLiOnly, e, &map);
    EXPECT_EQ(li.final_reward, li.li);
    const auto ce = r3::score(q, QueryType::kClosedEnded, r, ref, RewardVariant::kR3, e, &map);
    EXPECT_EQ(ce.final_reward, r3::clamp0(*ce.f_of_ry) * ce.rp);
    EXPECT_EQ(r3oe.final_reward, r3::clamp0(r3oe.r_x) * r3oe.li * r3oe.rp);
    for (const auto* b : {&r3oe, &oe, &li, &ce}) EXPECT_TRUE(std::isfinite(b->final_reward));
  }
}

TEST_F(RewardProperties, MonotoneInUniqueTrigramRatio) {
  const EmbeddingVector resp{{0.6f, 0.8f}};
  const CalibrationMap m{0.0, 1.0, 0.0, 2.0};
  for (auto v : {RewardVariant::kR3, RewardVariant::kR3OE, RewardVariant::kLiRp}) {
    for (auto qt : {QueryType::kOpenEnded, QueryType::kClosedEnded}) {
      double prev = -1.0;
      for (std::size_t unique = 1; unique <= 20; ++unique) {
        const auto tok = synthetic_tokens(22, 20, unique);
        const auto b = r3::score_embedded("q", qt, kQ, tok, resp, &kQ, v, &m);
        EXPECT_GE(b.final_reward, prev);
        prev = b.final_reward;
      }
    }
  }
}

TEST(BreakdownJson, Fields) {
  const auto tok = synthetic_tokens(200, 10, 9);
  const auto b = r3::score_embedded("q", QueryType::kOpenEnded, kQ, tok, kHalf, nullptr,
                                    RewardVariant::kR3, nullptr);
  const auto j = r3::io::to_json(b);
  EXPECT_EQ(j["branch"], "OE");
  EXPECT_EQ(j["variant"], "R3");
  EXPECT_TRUE(j["r_y"].is_null());
  EXPECT_EQ(j["final"].get<double>(), 0.9);
}

}  // namespace
