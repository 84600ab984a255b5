#pragma once

#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "r3/calibration.hpp"
#include "r3/classifier.hpp"
#include "r3/config.hpp"
#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/eval_metrics.hpp"
#include "r3/json_io.hpp"
#include "r3/remote_embedder.hpp"
#include "r3/reward.hpp"

namespace r3 {

struct EngineConfig {
  EmbedderDescriptor embedder;
  ClassifierDescriptor classifier;
  std::optional<std::string> calibration_path;
  RewardVariant variant = RewardVariant::kR3;
  ScoreMode score_mode = ScoreMode::kInnerProduct;
  double tau = eval::kDefaultRelevanceThreshold;

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_batch = 256;
  std::size_t max_text_bytes = 32 * 1024;
  bool strict = true;
  std::size_t threads = 8;

  static EngineConfig from(const KeyValueConfig& kv) {
    EngineConfig c;
    const auto ekind = kv.get_or("embedder.kind", "builtin");
    if (ekind == "builtin") c.embedder.kind = EmbedderKind::kBuiltinHashed;
    else if (ekind == "remote") c.embedder.kind = EmbedderKind::kRemote;
    else throw Error(ErrorCode::kConfig, "embedder.kind: expected builtin|remote, got \"" + ekind + "\"");
    c.embedder.dim = kv.get_uint("embedder.dim", c.embedder.dim);
    c.embedder.endpoint = kv.get("embedder.endpoint");
    c.embedder.normalize = kv.get_bool("embedder.normalize", c.embedder.normalize);
    c.embedder.max_batch = kv.get_uint("embedder.max_batch", c.embedder.max_batch);
    c.embedder.parallelism = kv.get_uint("embedder.parallelism", c.embedder.parallelism);
    c.embedder.timeout_seconds = kv.get_double("embedder.timeout_seconds", c.embedder.timeout_seconds);

    const auto ckind = kv.get_or("classifier.kind", "heuristic");
    if (ckind == "heuristic") c.classifier.kind = ClassifierKind::kHeuristic;
    else if (ckind == "random") c.classifier.kind = ClassifierKind::kRandom;
    else if (ckind == "external") c.classifier.kind = ClassifierKind::kExternal;
    else throw Error(ErrorCode::kConfig,
                     "classifier.kind: expected heuristic|random|external, got \"" + ckind + "\"");
    if (kv.has("classifier.seed")) c.classifier.seed = kv.get_uint("classifier.seed", 0);
    c.classifier.endpoint = kv.get("classifier.endpoint");
    const auto fb = kv.get_or("classifier.fallback", "oe");
    if (fb == "none") c.classifier.fallback = ClassifierFallback::kNone;
    else if (fb == "heuristic") c.classifier.fallback = ClassifierFallback::kHeuristic;
    else if (fb == "oe") c.classifier.fallback = ClassifierFallback::kOpenEnded;
    else throw Error(ErrorCode::kConfig, "classifier.fallback: expected none|heuristic|oe");
    c.classifier.prompt_path = kv.get_or("classifier.prompt_path", c.classifier.prompt_path);

    if (auto p = kv.get("calibration_path"); p && !p->empty()) c.calibration_path = *p;
    const auto vname = kv.get_or("variant", "R3");
    const auto v = parse_variant(vname);
    if (!v) throw Error(ErrorCode::kConfig, "variant: unknown reward variant \"" + vname + "\"");
    c.variant = *v;
    const auto mode = kv.get_or("score_mode", "inner");
    if (mode == "inner") c.score_mode = ScoreMode::kInnerProduct;
    else if (mode == "cosine") c.score_mode = ScoreMode::kCosine;
    else throw Error(ErrorCode::kConfig, "score_mode: expected inner|cosine");
    c.tau = kv.get_double("tau", c.tau);

    c.host = kv.get_or("service.host", c.host);
    c.port = static_cast<int>(kv.get_uint("service.port", static_cast<std::uint64_t>(c.port)));
    c.max_batch = kv.get_uint("service.max_batch", c.max_batch);
    c.max_text_bytes = kv.get_uint("service.max_text_bytes", c.max_text_bytes);
    c.strict = kv.get_bool("service.strict", c.strict);
    c.threads = kv.get_uint("service.threads", c.threads);
    c.validate();
    return c;
  }

  void validate() const {
    embedder.validate();
    classifier.validate();
    if (max_batch == 0) throw Error(ErrorCode::kConfig, "service.max_batch must be positive");
    if (max_text_bytes == 0) throw Error(ErrorCode::kConfig, "service.max_text_bytes must be positive");
    if (threads == 0) throw Error(ErrorCode::kConfig, "service.threads must be positive");
  }
};

struct ScoreRequest {
  std::string query;
  std::string response;
  std::optional<std::string> reference;
  std::optional<QueryType> query_type;
  std::optional<RewardVariant> variant;
};

/// Immutable scoring engine shared by the CLI and the HTTP service.
class Engine {
 public:
  /// `require_calibration` makes a missing map for variant R3 a startup
  /// error; the CLI turns it off and reports CE requests individually.
  explicit Engine(EngineConfig cfg, bool require_calibration = true)
      : Engine(cfg, make_embedder(cfg.embedder),
               cfg.calibration_path ? std::optional(io::load_calibration(*cfg.calibration_path))
                                    : std::nullopt,
               require_calibration) {}

  Engine(EngineConfig cfg, std::shared_ptr<const Embedder> embedder,
         std::optional<CalibrationMap> calibration, bool require_calibration = true)
      : cfg_(std::move(cfg)),
        embedder_(std::move(embedder)),
        classifier_(cfg_.classifier),
        calibration_(std::move(calibration)) {
    cfg_.validate();
    if (calibration_) {
      calibration_->validate();
      if (calibration_->embedder_dim != 0 && calibration_->embedder_dim != embedder_->dim())
        throw Error(ErrorCode::kConfig,
                    "calibration_path: map was fit with embedder dim " +
                        std::to_string(calibration_->embedder_dim) + ", engine uses " +
                        std::to_string(embedder_->dim()));
    }
    if (require_calibration && cfg_.variant == RewardVariant::kR3 && !calibration_)
      throw Error(ErrorCode::kConfig, "calibration_path is required when variant = R3");
  }

  const EngineConfig& config() const { return cfg_; }
  const Embedder& embedder() const { return *embedder_; }
  const QueryTypeClassifier& classifier() const { return classifier_; }
  const std::optional<CalibrationMap>& calibration() const { return calibration_; }

  RewardOptions reward_options() const {
    RewardOptions o;
    o.score_mode = cfg_.score_mode;
    return o;
  }

  ScoreRequest parse_score_request(const nlohmann::json& j) const {
    if (!j.is_object()) throw Error(ErrorCode::kMalformedInput, "score request must be an object");
    if (cfg_.strict)
      io::check_fields(j, {"query", "response", "reference", "query_type", "variant"});
    ScoreRequest r;
    r.query = io::required_string(j, "query");
    r.response = io::required_string(j, "response");
    r.reference = io::optional_string(j, "reference");
    for (const auto* s : {&r.query, &r.response})
      check_size(*s);
    if (r.reference) check_size(*r.reference);
    if (auto qt = io::optional_string(j, "query_type")) {
      r.query_type = parse_query_type(*qt);
      if (!r.query_type || (*qt != "OPEN-ENDED" && *qt != "CLOSED-ENDED"))
        throw Error(ErrorCode::kMalformedInput,
                    "query_type must be \"OPEN-ENDED\" or \"CLOSED-ENDED\"");
    }
    if (auto v = io::optional_string(j, "variant")) {
      r.variant = parse_variant(*v);
      if (!r.variant) throw Error(ErrorCode::kMalformedInput, "unknown variant \"" + *v + "\"");
    }
    return r;
  }

  /// Scores one request; the output is to_json(breakdown) plus the query
  /// type used and where it came from.
  nlohmann::json score(const ScoreRequest& r) const {
    QueryType qt;
    std::string source;
    if (r.query_type) {
      qt = *r.query_type;
      source = "request";
    } else {
      auto c = classifier_.classify(r.query);
      qt = c.type;
      source = std::move(c.source);
    }
    const auto variant = r.variant.value_or(cfg_.variant);
    const auto b = r3::score(r.query, qt, r.response, r.reference, variant, *embedder_,
                             calibration_ ? &*calibration_ : nullptr, reward_options());
    auto j = io::to_json(b);
    j["query_type"] = to_label(qt);
    j["query_type_source"] = source;
    return j;
  }

  nlohmann::json score_json(const nlohmann::json& j) const { return score(parse_score_request(j)); }

  nlohmann::json score_batch_json(const nlohmann::json& j) const {
    if (!j.is_array()) throw Error(ErrorCode::kMalformedInput, "score_batch body must be an array");
    if (j.size() > cfg_.max_batch)
      throw Error(ErrorCode::kPayloadTooLarge,
                  "batch of " + std::to_string(j.size()) + " exceeds max " +
                      std::to_string(cfg_.max_batch));
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < j.size(); ++i) {
      try {
        out.push_back(score_json(j[i]));
      } catch (const Error& e) {
        throw Error(e.code(), "item " + std::to_string(i) + ": " + e.what(), e.retryable());
      }
    }
    return out;
  }

  nlohmann::json classify_json(const nlohmann::json& j) const {
    if (cfg_.strict) io::check_fields(j, {"query"});
    const auto q = io::required_string(j, "query");
    check_size(q);
    const auto c = classifier_.classify(q);
    return {{"label", to_label(c.type)}, {"source", c.source}};
  }

  nlohmann::json health_json() const {
    return {{"status", "ok"}, {"embedder_dim", embedder_->dim()}};
  }

 private:
  void check_size(const std::string& s) const {
    if (s.size() > cfg_.max_text_bytes)
      throw Error(ErrorCode::kPayloadTooLarge,
                  "text of " + std::to_string(s.size()) + " bytes exceeds max " +
                      std::to_string(cfg_.max_text_bytes));
  }

  EngineConfig cfg_;
  std::shared_ptr<const Embedder> embedder_;
  QueryTypeClassifier classifier_;
  std::optional<CalibrationMap> calibration_;
};

}  // namespace r3
