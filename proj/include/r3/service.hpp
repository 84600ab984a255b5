#pragma once

#include <httplib.h>

#include <json.hpp>
#include <string>

#include "r3/engine.hpp"
#include "r3/error.hpp"

namespace r3 {

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kPayloadTooLarge: return 413;
    case ErrorCode::kTransport:
    case ErrorCode::kBadResponse: return 502;
    case ErrorCode::kNonFinite:
    case ErrorCode::kIo:
    case ErrorCode::kConfig: return 500;
    default: return 400;
  }
}

inline nlohmann::json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

/// HTTP front end over an Engine:
///   POST /v1/score, POST /v1/score_batch, POST /v1/classify, GET /healthz
class ScoringService {
 public:
  explicit ScoringService(const Engine& engine) : engine_(engine) {
    const auto& cfg = engine_.config();
    const std::size_t threads = cfg.threads;
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    server_.set_payload_max_length(cfg.max_batch * (3 * cfg.max_text_bytes + 1024) + 4096);

    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(engine_.health_json().dump(), "application/json");
    });
    post("/v1/score", [this](const nlohmann::json& j) { return engine_.score_json(j); });
    post("/v1/score_batch", [this](const nlohmann::json& j) { return engine_.score_batch_json(j); });
    post("/v1/classify", [this](const nlohmann::json& j) { return engine_.classify_json(j); });
  }

  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  /// Binds to the configured host/port; blocks until stop().
  bool listen() { return server_.listen(engine_.config().host, engine_.config().port); }

  /// Binds to an ephemeral port and returns it; call listen_after_bind() next.
  int bind_to_any_port(const std::string& host = "127.0.0.1") {
    return server_.bind_to_any_port(host);
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  void stop() { server_.stop(); }

 private:
  template <typename Handler>
  void post(const std::string& route, Handler handler) {
    server_.Post(route, [handler](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        res.status = 400;
        res.set_content(error_body("MALFORMED_INPUT", e.what()).dump(), "application/json");
        return;
      }
      try {
        res.set_content(handler(body).dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status_for(e.code());
        res.set_content(error_body(e.code_name(), e.what()).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_body("INTERNAL", e.what()).dump(), "application/json");
      }
    });
  }

  const Engine& engine_;
  httplib::Server server_;
};

}  // namespace r3
