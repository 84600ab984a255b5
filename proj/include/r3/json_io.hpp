#pragma once

#include <fstream>
#include <functional>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "r3/calibration.hpp"
#include "r3/error.hpp"
#include "r3/ppo_sandbox.hpp"
#include "r3/reward.hpp"
#include "r3/synrel.hpp"

namespace r3::io {

using nlohmann::json;

/// Rejects keys outside `allowed` (strict-mode schema check).
inline void check_fields(const json& j, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::kMalformedInput, "expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::kUnknownField, "unknown field \"" + key + "\"");
  }
}

inline std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw Error(ErrorCode::kMalformedInput, std::string("field \"") + key + "\" must be a string");
  return j[key].get<std::string>();
}

inline std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string())
    throw Error(ErrorCode::kMalformedInput, std::string("field \"") + key + "\" must be a string");
  return j[key].get<std::string>();
}

inline std::vector<std::string> string_array(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array())
    throw Error(ErrorCode::kMalformedInput, std::string("field \"") + key + "\" must be an array");
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string())
      throw Error(ErrorCode::kMalformedInput, std::string("field \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// RewardBreakdown ----------------------------------------------------------

inline json to_json(const RewardBreakdown& b) {
  return json{{"variant", to_string(b.variant)}, {"branch", to_string(b.branch)},
              {"r_x", b.r_x},                    {"r_y", opt_number(b.r_y)},
              {"li", b.li},                      {"rp", b.rp},
              {"f_of_ry", opt_number(b.f_of_ry)}, {"final", b.final_reward}};
}

// CalibrationMap -----------------------------------------------------------

inline json to_json(const CalibrationMap& m) {
  return json{{"src_lo", m.src_lo},
              {"src_hi", m.src_hi},
              {"dst_lo", m.dst_lo},
              {"dst_hi", m.dst_hi},
              {"percentile_lo", m.percentile_lo},
              {"percentile_hi", m.percentile_hi},
              {"embedder_dim", m.embedder_dim}};
}

inline CalibrationMap calibration_from_json(const json& j) {
  try {
    CalibrationMap m;
    m.src_lo = j.at("src_lo").get<double>();
    m.src_hi = j.at("src_hi").get<double>();
    m.dst_lo = j.at("dst_lo").get<double>();
    m.dst_hi = j.at("dst_hi").get<double>();
    m.percentile_lo = j.value("percentile_lo", 5.0);
    m.percentile_hi = j.value("percentile_hi", 95.0);
    m.embedder_dim = j.value("embedder_dim", std::size_t{0});
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("bad calibration map: ") + e.what());
  }
}

// Files --------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << content;
}

inline CalibrationMap load_calibration(const std::string& path) {
  try {
    return calibration_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedInput, path + ": " + e.what());
  }
}

/// Parses JSONL text line by line. Malformed lines raise an error naming the
/// line in strict mode; otherwise they are skipped and described in
/// `warnings`. Blank lines are ignored.
template <typename T>
std::vector<T> parse_jsonl(std::istream& in, const std::string& source,
                           const std::function<T(const json&)>& parse, bool strict,
                           std::vector<std::string>* warnings = nullptr) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const std::exception& e) {
      const std::string msg = source + ":" + std::to_string(lineno) + ": " + e.what();
      if (strict) throw Error(ErrorCode::kMalformedInput, msg);
      if (warnings) warnings->push_back(msg);
    }
  }
  return out;
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path, const std::function<T(const json&)>& parse,
                          bool strict, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return parse_jsonl<T>(in, path, parse, strict, warnings);
}

// SynRel -------------------------------------------------------------------

inline synrel::EntityRecord entity_from_json(const json& j) {
  synrel::EntityRecord e;
  e.entity = required_string(j, "entity");
  e.properties = string_array(j, "properties");
  if (e.entity.empty() || e.properties.empty())
    throw Error(ErrorCode::kMalformedInput, "entity needs a name and at least one property");
  return e;
}

inline json to_json(const synrel::RelevanceTriplet& t) {
  // Field order is part of the output format.
  json j = json::object();
  j["query"] = t.query;
  j["chosen"] = t.chosen;
  j["rejected"] = t.rejected;
  j["chosen_entity"] = t.chosen_entity;
  j["rejected_entity"] = t.rejected_entity;
  return j;
}

inline synrel::RelevanceTriplet triplet_from_json(const json& j) {
  synrel::RelevanceTriplet t;
  t.query = required_string(j, "query");
  t.chosen = required_string(j, "chosen");
  t.rejected = required_string(j, "rejected");
  t.chosen_entity = j.value("chosen_entity", std::string());
  t.rejected_entity = j.value("rejected_entity", std::string());
  return t;
}

/// Triplet JSONL line with keys in the documented order.
inline std::string triplet_line(const synrel::RelevanceTriplet& t) {
  return "{\"query\":" + json(t.query).dump() + ",\"chosen\":" + json(t.chosen).dump() +
         ",\"rejected\":" + json(t.rejected).dump() +
         ",\"chosen_entity\":" + json(t.chosen_entity).dump() +
         ",\"rejected_entity\":" + json(t.rejected_entity).dump() + "}";
}

// Sandbox ------------------------------------------------------------------

inline sandbox::SandboxTask task_from_json(const json& j) {
  sandbox::SandboxTask t;
  t.query = required_string(j, "query");
  const auto label = required_string(j, "query_type");
  const auto qt = parse_query_type(label);
  if (!qt) throw Error(ErrorCode::kMalformedInput, "bad query_type \"" + label + "\"");
  t.query_type = *qt;
  t.relevant_bank = string_array(j, "relevant_bank");
  t.irrelevant_bank = string_array(j, "irrelevant_bank");
  t.reference = required_string(j, "reference");
  return t;
}

inline json to_json(const sandbox::SandboxTask& t) {
  return json{{"query", t.query},
              {"query_type", to_label(t.query_type)},
              {"relevant_bank", t.relevant_bank},
              {"irrelevant_bank", t.irrelevant_bank},
              {"reference", t.reference}};
}

inline std::vector<sandbox::SandboxTask> load_tasks(const std::string& path, bool strict = true) {
  return read_jsonl<sandbox::SandboxTask>(path, task_from_json, strict);
}

inline json to_json(const sandbox::PolicySnapshot& p) {
  json types = json::object();
  for (std::size_t c = 0; c < sandbox::kNumTypes; ++c) {
    json steps = json::array();
    for (std::size_t t = 0; t < p.max_steps; ++t) {
      json cell = json::object();
      const auto pr = p.probs(c, t);
      for (std::size_t a = 0; a < sandbox::kNumActions; ++a)
        cell[std::string(sandbox::to_string(static_cast<sandbox::Action>(a)))] = pr[a];
      steps.push_back(cell);
    }
    types[c == 0 ? "OPEN-ENDED" : "CLOSED-ENDED"] = steps;
  }
  return json{{"max_steps", p.max_steps}, {"logits", p.logits}, {"probabilities", types}};
}

inline json to_json(const sandbox::PPOConfig& c) {
  return json{{"clip_ratio", c.clip_ratio},
              {"kl_coeff", c.kl_coeff},
              {"ppo_epochs", c.ppo_epochs},
              {"discount", c.discount},
              {"batch_episodes", c.batch_episodes},
              {"learning_rate", c.learning_rate},
              {"steps", c.steps},
              {"seed", c.seed},
              {"max_steps", c.max_steps},
              {"optimizer", c.optimizer == sandbox::PPOConfig::Optimizer::kAdam ? "adam" : "sgd"},
              {"normalize_advantages", c.normalize_advantages},
              {"advantage_std_floor", c.advantage_std_floor},
              {"baseline_decay", c.baseline_decay},
              {"kl_target", c.kl_target},
              {"kl_horizon", c.kl_horizon},
              {"eval_episodes_per_task", c.eval_episodes_per_task},
              {"relevance_threshold", c.relevance_threshold}};
}

inline json to_json(const sandbox::ExperimentReport& r) {
  json traj = {{"mean_reward", json::array()}, {"kl", json::array()},
               {"surrogate_loss", json::array()}, {"beta", json::array()},
               {"copy_rate", json::array()}, {"mean_rp", json::array()}};
  for (const auto& d : r.trajectory) {
    traj["mean_reward"].push_back(d.mean_reward);
    traj["kl"].push_back(d.kl);
    traj["surrogate_loss"].push_back(d.surrogate_loss);
    traj["beta"].push_back(d.beta);
    traj["copy_rate"].push_back(d.copy_rate);
    traj["mean_rp"].push_back(d.mean_rp);
  }
  const auto& s = r.final_stats;
  return json{{"variant", to_string(r.variant)},
              {"apply_repetition_penalty", r.reward_options.apply_repetition_penalty},
              {"config", to_json(r.config)},
              {"calibration", r.calibration ? to_json(*r.calibration) : json(nullptr)},
              {"diagnostics", traj},
              {"final", {{"episodes", s.episodes},
                         {"copy_rate", s.copy_rate},
                         {"mean_rp", s.mean_rp},
                         {"mean_li", s.mean_li},
                         {"mean_words", s.mean_words},
                         {"mean_reward", s.mean_reward},
                         {"relevant_sentence_ratio_proxy", s.mean_relevance_proxy}}},
              {"policy", to_json(r.final_policy)}};
}

inline std::string reward_curve_csv(const sandbox::ExperimentReport& r) {
  std::string out = "step,mean_reward,kl,copy_rate,mean_rp\n";
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    const auto& d = r.trajectory[i];
    out += std::to_string(i) + "," + json(d.mean_reward).dump() + "," + json(d.kl).dump() + "," +
           json(d.copy_rate).dump() + "," + json(d.mean_rp).dump() + "\n";
  }
  return out;
}

}  // namespace r3::io
