// r3: command-line front end for the reward toolkit.
//
//   r3 score      single request or JSONL batch -> JSONL breakdowns
//   r3 calibrate  (reference, response) corpus -> calibration JSON
//   r3 synrel     gen | eval
//   r3 ppo run    sandbox training run -> report JSON (+ CSV reward curve)
//   r3 eval       winrate | selfbleu | relratio | tau | lenstats
//   r3 serve      HTTP scoring service
//
// Errors print one line `error: CODE: message` on stderr and exit 1.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "r3/config.hpp"
#include "r3/engine.hpp"
#include "r3/eval_metrics.hpp"
#include "r3/json_io.hpp"
#include "r3/ppo_sandbox.hpp"
#include "r3/service.hpp"
#include "r3/synrel.hpp"

namespace {

using nlohmann::json;
using r3::Error;
using r3::ErrorCode;

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  bool lenient = false;
};

r3::KeyValueConfig load_config(const Globals& g) {
  auto kv = g.config_path.empty() ? r3::KeyValueConfig{} : r3::KeyValueConfig::load(g.config_path);
  for (const auto& o : g.overrides)
    if (!kv.assign(o)) throw Error(ErrorCode::kConfig, "--set expects key=value, got \"" + o + "\"");
  return kv;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") std::cout << content;
  else r3::io::write_file(path, content);
}

// Strict unless --lenient; skipped lines are reported on stderr.
template <typename T>
std::vector<T> read_lines(const Globals& g, const std::string& path,
                          const std::function<T(const json&)>& parse) {
  std::vector<std::string> warnings;
  auto rows = r3::io::read_jsonl<T>(path, parse, !g.lenient, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: skipped " << w << "\n";
  return rows;
}

json read_json_lines(const Globals& g, const std::string& path) {
  json all = json::array();
  for (auto& r : read_lines<json>(g, path, [](const json& j) { return j; })) all.push_back(std::move(r));
  return all;
}

std::string response_of(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return r3::io::required_string(j, "response");
}

// score ---------------------------------------------------------------------

struct ScoreArgs {
  std::string query, response, input, output, query_type, variant;
  std::optional<std::string> reference;
};

int run_score(const Globals& g, const ScoreArgs& a) {
  auto kv = load_config(g);
  if (!a.variant.empty()) kv.assign("variant=" + a.variant);
  const r3::Engine engine(r3::EngineConfig::from(kv), /*require_calibration=*/false);
  std::string out;
  if (!a.input.empty()) {
    for (const auto& req : read_json_lines(g, a.input))
      out += engine.score_json(req).dump() + "\n";
  } else {
    json req = {{"query", a.query}, {"response", a.response}};
    if (a.reference) req["reference"] = *a.reference;
    if (!a.query_type.empty()) {
      const auto qt = r3::parse_query_type(a.query_type);
      if (!qt) throw Error(ErrorCode::kInvalidArgument, "bad --query-type \"" + a.query_type + "\"");
      req["query_type"] = r3::to_label(*qt);
    }
    out = engine.score_json(req).dump() + "\n";
  }
  emit(a.output, out);
  return 0;
}

// calibrate -----------------------------------------------------------------

struct CalibrateArgs {
  std::string input, output;
  double p_lo = 5.0, p_hi = 95.0;
};

int run_calibrate(const Globals& g, const CalibrateArgs& a) {
  const auto cfg = r3::EngineConfig::from(load_config(g));
  const auto embedder = r3::make_embedder(cfg.embedder);
  auto pairs = read_lines<r3::CalibrationPair>(
      g, a.input,
      [](const json& j) {
        return r3::CalibrationPair{r3::io::required_string(j, "reference"),
                                   r3::io::required_string(j, "response")};
      });
  const auto map = r3::fit_calibration(*embedder, pairs, a.p_lo, a.p_hi);
  const auto text = r3::io::to_json(map).dump(2) + "\n";
  if (!a.output.empty()) r3::io::write_file(a.output, text);
  std::cout << text;
  return 0;
}

// synrel --------------------------------------------------------------------

struct SynrelGenArgs {
  std::string entities = R3_DATA_DIR "/entities_demo.jsonl";
  std::string output;
  std::size_t n = 530;
  std::uint64_t seed = 1;
};

int run_synrel_gen(const Globals& g, const SynrelGenArgs& a) {
  std::vector<std::string> warnings;
  const auto entities =
      read_lines<r3::synrel::EntityRecord>(g, a.entities, r3::io::entity_from_json);
  const auto triplets = r3::synrel::generate(entities, a.n, a.seed, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::string out;
  for (const auto& t : triplets) out += r3::io::triplet_line(t) + "\n";
  emit(a.output, out);
  return 0;
}

struct SynrelEvalArgs {
  std::string triplets;
  std::string scorer = "relevance";
};

int run_synrel_eval(const Globals& g, const SynrelEvalArgs& a) {
  const auto triplets =
      read_lines<r3::synrel::RelevanceTriplet>(g, a.triplets, r3::io::triplet_from_json);
  const auto cfg = r3::EngineConfig::from(load_config(g));
  std::shared_ptr<const r3::Embedder> embedder;
  r3::synrel::Scorer scorer;
  if (a.scorer == "relevance") {
    embedder = r3::make_embedder(cfg.embedder);
    scorer = r3::synrel::relevance_scorer(*embedder);
  } else if (a.scorer == "length") {
    scorer = r3::synrel::length_scorer();
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--scorer must be relevance or length");
  }
  const double acc = r3::synrel::evaluate_accuracy(triplets, scorer);
  std::cout << json{{"scorer", a.scorer}, {"triplets", triplets.size()}, {"accuracy", acc}}.dump()
            << "\n";
  return 0;
}

// ppo -----------------------------------------------------------------------

struct PpoArgs {
  std::string variant = "R3";
  std::string tasks = R3_DATA_DIR "/sandbox_tasks.jsonl";
  std::string report, csv, calibration;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool disable_rp = false;
};

int run_ppo(const Globals& g, const PpoArgs& a) {
  auto kv = load_config(g);
  if (a.seed) kv.assign("ppo.seed=" + std::to_string(*a.seed));
  if (a.steps) kv.assign("ppo.steps=" + std::to_string(*a.steps));
  const auto variant = r3::parse_variant(a.variant);
  if (!variant) throw Error(ErrorCode::kInvalidArgument, "unknown variant \"" + a.variant + "\"");
  const auto cfg = r3::ppo_config_from(kv);
  const auto ecfg = r3::EngineConfig::from(kv);
  const auto tasks = read_lines<r3::sandbox::SandboxTask>(g, a.tasks, r3::io::task_from_json);
  std::optional<r3::CalibrationMap> map;
  if (!a.calibration.empty()) map = r3::io::load_calibration(a.calibration);
  else if (ecfg.calibration_path) map = r3::io::load_calibration(*ecfg.calibration_path);
  r3::RewardOptions opts;
  opts.score_mode = ecfg.score_mode;
  opts.apply_repetition_penalty = !a.disable_rp;

  const auto report =
      r3::sandbox::run_experiment(*variant, tasks, cfg, r3::make_embedder(ecfg.embedder), map, opts);
  const auto j = r3::io::to_json(report);
  if (!a.csv.empty()) r3::io::write_file(a.csv, r3::io::reward_curve_csv(report));
  if (a.report.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    r3::io::write_file(a.report, j.dump(2) + "\n");
    std::cout << j["final"].dump() << "\n";
  }
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::size_t wins = 0, ties = 0, losses = 0;
  std::string input, csv;
  std::optional<double> tau;
};

int run_winrate(const EvalArgs& a) {
  const double rate = r3::eval::adjusted_win_rate({a.wins, a.ties, a.losses});
  std::cout << json{{"wins", a.wins}, {"ties", a.ties}, {"losses", a.losses}, {"win_rate", rate}}.dump()
            << "\n";
  return 0;
}

// Each input line is {"responses": [...]}: one instruction's samples.
int run_selfbleu(const Globals& g, const EvalArgs& a) {
  json rows = json::array();
  double sum = 0.0;
  std::size_t line = 0;
  for (const auto& j : read_json_lines(g, a.input)) {
    ++line;
    const auto responses = r3::io::string_array(j, "responses");
    const auto r = r3::eval::self_bleu(responses);
    rows.push_back({{"self_bleu", r.score}, {"empty_responses", r.empty_responses}});
    sum += r.score;
  }
  const double mean = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
  std::cout << json{{"mean_self_bleu", mean}, {"groups", rows}}.dump() << "\n";
  return 0;
}

int run_relratio(const Globals& g, const EvalArgs& a) {
  const auto kv = load_config(g);
  const auto cfg = r3::EngineConfig::from(kv);
  const double tau = a.tau.value_or(cfg.tau);
  const auto embedder = r3::make_embedder(cfg.embedder);
  std::vector<r3::eval::RelevanceRatio> judged;
  double sum = 0.0;
  for (const auto& j : read_json_lines(g, a.input)) {
    const auto q = r3::io::required_string(j, "query");
    const auto r = r3::io::required_string(j, "response");
    judged.push_back(r3::eval::relevant_sentence_ratio(q, r, *embedder, tau, cfg.score_mode));
    sum += judged.back().ratio;
    json sentences = json::array();
    for (const auto& s : judged.back().judgments)
      sentences.push_back({{"sentence", s.sentence}, {"score", s.score}, {"relevant", s.relevant}});
    std::cout << json{{"relevant_sentence_ratio_proxy", judged.back().ratio}, {"tau", tau},
                      {"sentences", sentences}}
                     .dump()
              << "\n";
  }
  if (!a.csv.empty())
    r3::io::write_file(a.csv, r3::eval::sentence_order_csv(r3::eval::sentence_order_table(judged)));
  std::cerr << "mean relevant_sentence_ratio_proxy: "
            << (judged.empty() ? 0.0 : sum / static_cast<double>(judged.size())) << "\n";
  return 0;
}

// Each input line is {"query", "sentence", "relevant": bool}.
int run_tau(const Globals& g, const EvalArgs& a) {
  const auto cfg = r3::EngineConfig::from(load_config(g));
  const auto embedder = r3::make_embedder(cfg.embedder);
  const auto labeled = read_lines<r3::eval::LabeledSentence>(
      g, a.input,
      [](const json& j) {
        if (!j.contains("relevant") || !j["relevant"].is_boolean())
          throw Error(ErrorCode::kMalformedInput, "field \"relevant\" must be a boolean");
        return r3::eval::LabeledSentence{r3::io::required_string(j, "query"),
                                         r3::io::required_string(j, "sentence"),
                                         j["relevant"].get<bool>()};
      });
  const auto fit = r3::eval::fit_threshold(labeled, *embedder, cfg.score_mode);
  std::cout << json{{"labeled", labeled.size()}, {"tau", fit.tau}, {"accuracy", fit.accuracy},
                    {"margin", fit.margin}}
                   .dump()
            << "\n";
  return 0;
}

int run_lenstats(const Globals& g, const EvalArgs& a) {
  std::vector<std::string> responses;
  for (const auto& j : read_json_lines(g, a.input)) responses.push_back(response_of(j));
  const auto s = r3::eval::length_stats(responses);
  std::cout << json{{"responses", responses.size()}, {"mean_words", s.mean_words},
                    {"mean_sentences", s.mean_sentences}}
                   .dump()
            << "\n";
  return 0;
}

// serve ---------------------------------------------------------------------

r3::ScoringService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_serve(const Globals& g, const std::string& host, std::optional<int> port) {
  auto kv = load_config(g);
  if (!host.empty()) kv.assign("service.host=" + host);
  if (port) kv.assign("service.port=" + std::to_string(*port));
  const r3::Engine engine(r3::EngineConfig::from(kv));
  r3::ScoringService service(engine);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << engine.config().host << ":" << engine.config().port << "\n";
  if (!service.listen())
    throw Error(ErrorCode::kIo, "cannot bind " + engine.config().host + ":" +
                                    std::to_string(engine.config().port));
  g_service = nullptr;
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"r3 reward toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "key = value configuration file");
  app.add_option("--set", g.overrides, "override a config key (key=value); repeatable");
  app.add_flag("--lenient", g.lenient, "skip malformed JSONL lines with a warning instead of failing");

  int rc = 0;

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "score one request or a JSONL batch");
  score_cmd->add_option("--query", score.query);
  score_cmd->add_option("--response", score.response);
  score_cmd->add_option("--reference", score.reference);
  score_cmd->add_option("--query-type", score.query_type, "OPEN-ENDED|CLOSED-ENDED (or OE|CE)");
  score_cmd->add_option("--variant", score.variant);
  score_cmd->add_option("-i,--input", score.input, "JSONL of score requests");
  score_cmd->add_option("-o,--output", score.output);
  score_cmd->callback([&] {
    if (score.input.empty() && (score_cmd->count("--query") == 0 || score_cmd->count("--response") == 0))
      throw CLI::ValidationError("score", "needs --input, or --query and --response");
    rc = run_score(g, score);
  });

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "fit the closed-ended calibration map");
  cal_cmd->add_option("-i,--input", cal.input, "JSONL of {reference, response}")->required();
  cal_cmd->add_option("-o,--output", cal.output);
  cal_cmd->add_option("--p-lo", cal.p_lo);
  cal_cmd->add_option("--p-hi", cal.p_hi);
  cal_cmd->callback([&] { rc = run_calibrate(g, cal); });

  auto* syn_cmd = app.add_subcommand("synrel", "synthetic relevance triplets");
  syn_cmd->require_subcommand(1);
  SynrelGenArgs gen;
  auto* gen_cmd = syn_cmd->add_subcommand("gen", "generate triplets from an entity dump");
  gen_cmd->add_option("--entities", gen.entities);
  gen_cmd->add_option("--n", gen.n);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("-o,--output", gen.output);
  gen_cmd->callback([&] { rc = run_synrel_gen(g, gen); });
  SynrelEvalArgs sev;
  auto* sev_cmd = syn_cmd->add_subcommand("eval", "accuracy of a scorer on triplets");
  sev_cmd->add_option("--triplets", sev.triplets)->required();
  sev_cmd->add_option("--scorer", sev.scorer, "relevance|length");
  sev_cmd->callback([&] { rc = run_synrel_eval(g, sev); });

  auto* ppo_cmd = app.add_subcommand("ppo", "PPO reward-hacking sandbox");
  ppo_cmd->require_subcommand(1);
  PpoArgs ppo;
  auto* run_cmd = ppo_cmd->add_subcommand("run", "train a sandbox policy");
  run_cmd->add_option("--variant", ppo.variant, "R3|R3_OE|RX_ONLY|LI_RP|LI_ONLY");
  run_cmd->add_option("--tasks", ppo.tasks);
  run_cmd->add_option("--seed", ppo.seed);
  run_cmd->add_option("--steps", ppo.steps);
  run_cmd->add_option("--report", ppo.report);
  run_cmd->add_option("--csv", ppo.csv);
  run_cmd->add_option("--calibration", ppo.calibration);
  run_cmd->add_flag("--disable-rp", ppo.disable_rp, "compute RP but leave it out of the reward");
  run_cmd->callback([&] { rc = run_ppo(g, ppo); });

  auto* eval_cmd = app.add_subcommand("eval", "evaluation metrics");
  eval_cmd->require_subcommand(1);
  EvalArgs ev;
  auto* wr = eval_cmd->add_subcommand("winrate", "(wins + 0.5 ties) / total");
  wr->add_option("--wins", ev.wins);
  wr->add_option("--ties", ev.ties);
  wr->add_option("--losses", ev.losses);
  wr->callback([&] { rc = run_winrate(ev); });
  auto* sb = eval_cmd->add_subcommand("selfbleu", "Self-BLEU per {responses:[...]} line");
  sb->add_option("-i,--input", ev.input)->required();
  sb->callback([&] { rc = run_selfbleu(g, ev); });
  auto* rr = eval_cmd->add_subcommand("relratio", "relevant-sentence ratio proxy");
  rr->add_option("-i,--input", ev.input, "JSONL of {query, response}")->required();
  rr->add_option("--tau", ev.tau);
  rr->add_option("--csv", ev.csv, "per-sentence-position table");
  rr->callback([&] { rc = run_relratio(g, ev); });
  auto* tc = eval_cmd->add_subcommand("tau", "fit the relevance threshold on labeled sentences");
  tc->add_option("-i,--input", ev.input, "JSONL of {query, sentence, relevant}")->required();
  tc->callback([&] { rc = run_tau(g, ev); });
  auto* ls = eval_cmd->add_subcommand("lenstats", "mean words and sentences");
  ls->add_option("-i,--input", ev.input)->required();
  ls->callback([&] { rc = run_lenstats(g, ev); });

  std::string host;
  std::optional<int> port;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP scoring service");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->callback([&] { rc = run_serve(g, host, port); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code_name() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: INTERNAL: " << one_line(e.what()) << "\n";
    return 1;
  }
  return rc;
}
