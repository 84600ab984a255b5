#pragma once

#include <httplib.h>

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "r3/error.hpp"
#include "r3/http_util.hpp"
#include "r3/query_type.hpp"

#ifndef R3_DATA_DIR
#define R3_DATA_DIR "data"
#endif

namespace r3 {

enum class ClassifierKind { kHeuristic, kRandom, kExternal };

/// What to do when the external classifier fails.
enum class ClassifierFallback { kNone, kHeuristic, kOpenEnded };

struct ClassifierDescriptor {
  ClassifierKind kind = ClassifierKind::kHeuristic;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> endpoint;
  ClassifierFallback fallback = ClassifierFallback::kOpenEnded;
  std::string prompt_path = R3_DATA_DIR "/query_type_prompt.txt";
  double timeout_seconds = 30.0;

  void validate() const {
    if (kind == ClassifierKind::kRandom && !seed)
      throw Error(ErrorCode::kConfig, "classifier.seed is required for the random classifier");
    if (kind == ClassifierKind::kExternal && (!endpoint || endpoint->empty()))
      throw Error(ErrorCode::kConfig, "classifier.endpoint is required for the external classifier");
  }
};

struct Classification {
  QueryType type;
  std::string source;  // heuristic | random | external | fallback-heuristic | fallback-oe
};

inline std::string load_prompt_template(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read classifier prompt template: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.find("{conversation}") == std::string::npos)
    throw Error(ErrorCode::kConfig, "prompt template lacks a {conversation} slot: " + path);
  return s;
}

inline std::string render_prompt(const std::string& tmpl, std::string_view conversation) {
  std::string out = tmpl;
  const auto pos = out.find("{conversation}");
  out.replace(pos, std::string_view("{conversation}").size(), conversation);
  return out;
}

/// Resolves T(x). Immutable after construction; safe to share across threads
/// (the external client opens one connection per request).
class QueryTypeClassifier {
 public:
  explicit QueryTypeClassifier(ClassifierDescriptor desc) : desc_(std::move(desc)) {
    desc_.validate();
    if (desc_.kind == ClassifierKind::kExternal) {
      endpoint_ = http::Endpoint::parse(*desc_.endpoint);
      prompt_ = load_prompt_template(desc_.prompt_path);
    }
  }

  const ClassifierDescriptor& descriptor() const { return desc_; }

  Classification classify(std::string_view query) const {
    switch (desc_.kind) {
      case ClassifierKind::kHeuristic:
        return {classify_heuristic(query), "heuristic"};
      case ClassifierKind::kRandom:
        return {classify_random(query, *desc_.seed), "random"};
      case ClassifierKind::kExternal:
        try {
          return {classify_external(query), "external"};
        } catch (const Error&) {
          if (desc_.fallback == ClassifierFallback::kHeuristic)
            return {classify_heuristic(query), "fallback-heuristic"};
          if (desc_.fallback == ClassifierFallback::kOpenEnded)
            return {QueryType::kOpenEnded, "fallback-oe"};
          throw;
        }
    }
    return {QueryType::kOpenEnded, "fallback-oe"};
  }

  /// POST {endpoint}/v1/classify {"conversation": rendered prompt} -> {"label": ...}
  QueryType classify_external(std::string_view query) const {
    nlohmann::json body = {{"conversation", render_prompt(prompt_, query)}};
    auto client = endpoint_->client(desc_.timeout_seconds);
    auto res = client->Post(endpoint_->path("/v1/classify"), body.dump(), "application/json");
    if (!res)
      throw Error(ErrorCode::kTransport,
                  "classify request failed: " + httplib::to_string(res.error()) + " (endpoint " +
                      endpoint_->original + ")",
                  true);
    if (res->status != 200)
      throw Error(ErrorCode::kTransport,
                  "classify request returned HTTP " + std::to_string(res->status), res->status >= 500);
    try {
      const auto parsed = nlohmann::json::parse(res->body);
      const auto label = parsed.at("label").get<std::string>();
      auto t = parse_query_type(text::detail::trim(label));
      if (!t || (label.find("ENDED") == std::string::npos))
        throw Error(ErrorCode::kBadResponse, "unparseable classifier label: " + label);
      return *t;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kBadResponse, std::string("bad classifier response: ") + e.what());
    }
  }

 private:
  ClassifierDescriptor desc_;
  std::optional<http::Endpoint> endpoint_;
  std::string prompt_;
};

}  // namespace r3
