#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "r3/engine.hpp"
#include "r3/service.hpp"
#include "service_harness.hpp"
#include "test_support.hpp"

namespace {

using nlohmann::json;
using r3::Engine;
using r3::EngineConfig;
using r3::ErrorCode;
using r3::KeyValueConfig;
using r3::testing::ServiceHarness;

const r3::CalibrationMap kMap{0.0, 0.6, 0.0, 2.0, 5.0, 95.0, 1024};

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const r3::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected r3::Error";
  return ErrorCode::kIo;
}

Engine make_engine(const std::string& conf = "") {
  return Engine(EngineConfig::from(KeyValueConfig::parse(conf)),
                std::make_shared<r3::HashedEmbedder>(), kMap);
}

TEST(Config, ParsesKeysCommentsAndOverrides) {
  auto kv = KeyValueConfig::parse(
      "# comment\n\n variant = rx_only \nservice.port=9001\ntau = 0.2\nservice.strict = false\n");
  kv.assign("service.port = 9002");
  const auto c = EngineConfig::from(kv);
  EXPECT_EQ(c.variant, r3::RewardVariant::kRxOnly);
  EXPECT_EQ(c.port, 9002);
  EXPECT_EQ(c.tau, 0.2);
  EXPECT_FALSE(c.strict);
  EXPECT_EQ(c.embedder.kind, r3::EmbedderKind::kBuiltinHashed);
  EXPECT_EQ(c.embedder.dim, 1024u);
}

TEST(Config, Errors) {
  auto bad = [](const char* text) {
    return code_of([&] { EngineConfig::from(KeyValueConfig::parse(text)); });
  };
  EXPECT_EQ(code_of([] { KeyValueConfig::parse("no equals sign"); }), ErrorCode::kConfig);
  EXPECT_EQ(bad("embedder.kind = magic"), ErrorCode::kConfig);
  EXPECT_EQ(bad("embedder.kind = remote"), ErrorCode::kConfig);
  EXPECT_EQ(bad("classifier.kind = random"), ErrorCode::kConfig);
  EXPECT_EQ(bad("variant = R9"), ErrorCode::kConfig);
  EXPECT_EQ(bad("tau = high"), ErrorCode::kConfig);
  EXPECT_EQ(bad("service.strict = maybe"), ErrorCode::kConfig);
  EXPECT_EQ(bad("service.max_batch = 0"), ErrorCode::kConfig);
  EXPECT_EQ(bad("score_mode = l2"), ErrorCode::kConfig);
  try {
    KeyValueConfig::parse("a = 1\noops\n", "x.conf");
  } catch (const r3::Error& e) {
    EXPECT_NE(std::string(e.what()).find("x.conf:2"), std::string::npos);
  }
}

TEST(EngineSetup, CalibrationRequiredForR3) {
  const auto cfg = EngineConfig::from(KeyValueConfig::parse(""));
  EXPECT_EQ(code_of([&] { Engine(cfg, std::make_shared<r3::HashedEmbedder>(), std::nullopt); }),
            ErrorCode::kConfig);
  EXPECT_NO_THROW(Engine(cfg, std::make_shared<r3::HashedEmbedder>(), std::nullopt, false));
  auto wrong_dim = kMap;
  wrong_dim.embedder_dim = 64;
  EXPECT_EQ(code_of([&] { Engine(cfg, std::make_shared<r3::HashedEmbedder>(), wrong_dim); }),
            ErrorCode::kConfig);
}

TEST(EngineRequests, MatchesLibraryAndReportsQueryType) {
  const auto engine = make_engine();
  r3::HashedEmbedder e;
  const auto out = engine.score_json({{"query", "Who wrote Hamlet?"},
                                      {"response", "Hamlet was written by William Shakespeare."},
                                      {"reference", "William Shakespeare wrote Hamlet."}});
  const auto lib = r3::score("Who wrote Hamlet?", r3::QueryType::kClosedEnded,
                             "Hamlet was written by William Shakespeare.",
                             std::string("William Shakespeare wrote Hamlet."), r3::RewardVariant::kR3,
                             e, &kMap);
  EXPECT_EQ(out["final"].get<double>(), lib.final_reward);
  EXPECT_EQ(out["query_type"], "CLOSED-ENDED");
  EXPECT_EQ(out["query_type_source"], "heuristic");
  EXPECT_EQ(out["branch"], "CE");
  const auto forced = engine.score_json(
      {{"query", "Who wrote Hamlet?"}, {"response", "x"}, {"query_type", "OPEN-ENDED"}, {"variant", "li_only"}});
  EXPECT_EQ(forced["query_type_source"], "request");
  EXPECT_EQ(forced["variant"], "LI_ONLY");
}

TEST(EngineRequests, StrictAndLenientFields) {
  const json extra = {{"query", "Tell me about owls"}, {"response", "Owls hunt."}, {"mood", "happy"}};
  EXPECT_EQ(code_of([&] { make_engine().score_json(extra); }), ErrorCode::kUnknownField);
  EXPECT_NO_THROW(make_engine("service.strict = false").score_json(extra));
  const auto engine = make_engine();
  EXPECT_EQ(code_of([&] { engine.score_json({{"query", "q"}}); }), ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of([&] { engine.score_json({{"query", 3}, {"response", "r"}}); }),
            ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of([&] { engine.score_json({{"query", "q"}, {"response", "r"}, {"query_type", "OE"}}); }),
            ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of([&] { engine.score_json({{"query", "q"}, {"response", "r"}, {"variant", "nope"}}); }),
            ErrorCode::kMalformedInput);
  EXPECT_EQ(code_of([&] { engine.score_json(json::array()); }), ErrorCode::kMalformedInput);
}

TEST(EngineRequests, SizeLimits) {
  const auto engine = make_engine("service.max_text_bytes = 10\nservice.max_batch = 2");
  EXPECT_EQ(code_of([&] { engine.score_json({{"query", "q"}, {"response", std::string(11, 'a')}}); }),
            ErrorCode::kPayloadTooLarge);
  EXPECT_NO_THROW(engine.score_json({{"query", "q"}, {"response", std::string(10, 'a')}}));
  const json item = {{"query", "Tell me"}, {"response", "ok"}};
  EXPECT_EQ(code_of([&] { engine.score_batch_json(json::array({item, item, item})); }),
            ErrorCode::kPayloadTooLarge);
  try {
    engine.score_batch_json(json::array({item, {{"query", "q"}}}));
    FAIL();
  } catch (const r3::Error& e) {
    EXPECT_NE(std::string(e.what()).find("item 1"), std::string::npos);
  }
}

TEST(Http, StatusMapping) {
  EXPECT_EQ(r3::http_status_for(ErrorCode::kReferenceRequired), 400);
  EXPECT_EQ(r3::http_status_for(ErrorCode::kUnknownField), 400);
  EXPECT_EQ(r3::http_status_for(ErrorCode::kPayloadTooLarge), 413);
  EXPECT_EQ(r3::http_status_for(ErrorCode::kTransport), 502);
  EXPECT_EQ(r3::http_status_for(ErrorCode::kNonFinite), 500);
}

class HttpService : public ::testing::Test {
 protected:
  Engine engine = make_engine("service.max_batch = 4\nservice.max_text_bytes = 4096\nservice.threads = 4");
  ServiceHarness svc{engine};
};

TEST_F(HttpService, Health) {
  auto res = svc.client().Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body), (json{{"status", "ok"}, {"embedder_dim", 1024}}));
}

TEST_F(HttpService, ScoreMatchesEngine) {
  const json req = {{"query", "Tell me about owls"}, {"response", "Owls hunt at night. Owls fly."}};
  const auto [status, body] = svc.post("/v1/score", req);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body, engine.score_json(req));
}

TEST_F(HttpService, ScoreBatchIsBareArray) {
  const json items = json::array({{{"query", "Tell me about owls"}, {"response", "Owls hunt."}},
                                  {{"query", "Who wrote Hamlet?"}, {"response", "Shakespeare."},
                                   {"reference", "Shakespeare wrote it."}}});
  const auto [status, body] = svc.post("/v1/score_batch", items);
  EXPECT_EQ(status, 200);
  ASSERT_TRUE(body.is_array());
  EXPECT_EQ(body, engine.score_batch_json(items));
}

TEST_F(HttpService, Classify) {
  const auto [status, body] = svc.post("/v1/classify", json{{"query", "How many moons does Mars have?"}});
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body, (json{{"label", "CLOSED-ENDED"}, {"source", "heuristic"}}));
  EXPECT_EQ(svc.post("/v1/classify", json{{"conversation", "x"}}).first, 400);
}

TEST_F(HttpService, ErrorStatuses) {
  auto check = [&](const std::string& path, const std::string& body, int status, const char* code) {
    const auto [s, b] = svc.post(path, body);
    EXPECT_EQ(s, status) << body;
    EXPECT_EQ(b["error"]["code"], code) << body;
    EXPECT_TRUE(b["error"]["message"].is_string());
  };
  check("/v1/score", "{not json", 400, "MALFORMED_INPUT");
  check("/v1/score", R"({"query":"Who wrote Hamlet?","response":"Shakespeare"})", 400,
        "REFERENCE_REQUIRED");
  check("/v1/score", R"({"query":"q","response":"r","extra":1})", 400, "UNKNOWN_FIELD");
  check("/v1/score", json{{"query", "q"}, {"response", std::string(5000, 'a')}}.dump(), 413,
        "PAYLOAD_TOO_LARGE");
  const json item = {{"query", "Tell me"}, {"response", "ok"}};
  check("/v1/score_batch", json::array({item, item, item, item, item}).dump(), 413, "PAYLOAD_TOO_LARGE");
  check("/v1/score_batch", item.dump(), 400, "MALFORMED_INPUT");
  EXPECT_EQ(svc.client().Get("/v1/nothing")->status, 404);
}

TEST_F(HttpService, ConcurrentClientsGetIdenticalResults) {
  r3::Rng rng(6);
  std::vector<json> reqs;
  for (int i = 0; i < 40; ++i)
    reqs.push_back({{"query", r3::testing::random_text(rng, 6)},
                    {"response", r3::testing::random_text(rng, 1 + rng.index(40))},
                    {"query_type", "OPEN-ENDED"}});
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      httplib::Client c(svc.client().host(), svc.client().port());
      for (const auto& r : reqs) {
        auto res = c.Post("/v1/score", r.dump(), "application/json");
        if (!res || json::parse(res->body) != engine.score_json(r)) ++mismatches;
      }
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Jsonl, StrictAndLenient) {
  const std::string text = "{\"query\":\"a\"}\n\nnot json\n{\"query\":\"b\"}\n";
  auto parse = [](const json& j) { return j.at("query").get<std::string>(); };
  std::istringstream strict_in(text);
  try {
    r3::io::parse_jsonl<std::string>(strict_in, "in.jsonl", parse, true);
    FAIL();
  } catch (const r3::Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedInput);
    EXPECT_NE(std::string(e.what()).find("in.jsonl:3"), std::string::npos);
  }
  std::istringstream lenient_in(text);
  std::vector<std::string> warnings;
  const auto got = r3::io::parse_jsonl<std::string>(lenient_in, "in.jsonl", parse, false, &warnings);
  EXPECT_EQ(got, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("in.jsonl:3"), std::string::npos);
}

// /v1/embed stand-in that serves the builtin embedder's vectors.
class FakeEmbedServer {
 public:
  FakeEmbedServer() {
    server_.server().Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      const auto texts = json::parse(req.body).at("texts").get<std::vector<std::string>>();
      json vectors = json::array();
      for (const auto& v : local_.embed(texts)) vectors.push_back(v.values);
      res.set_content(json{{"dim", 1024}, {"vectors", vectors}}.dump(), "application/json");
    });
    server_.start();
  }
  std::string url() const { return server_.url(); }

 private:
  r3::HashedEmbedder local_;
  r3::testing::LocalServer server_;
};

TEST(RemoteEngine, ScoresMatchBuiltin) {
  FakeEmbedServer fake;
  const auto cfg = EngineConfig::from(KeyValueConfig::parse(
      "embedder.kind = remote\nembedder.endpoint = " + fake.url() + "\nembedder.max_batch = 2\n"));
  const Engine remote(cfg, r3::make_embedder(cfg.embedder), kMap);
  const auto local = make_engine();
  const json req = {{"query", "Who wrote Hamlet?"}, {"response", "Shakespeare wrote Hamlet."},
                    {"reference", "William Shakespeare."}};
  EXPECT_EQ(remote.score_json(req), local.score_json(req));
}

}  // namespace
