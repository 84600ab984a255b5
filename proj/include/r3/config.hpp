#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "r3/error.hpp"
#include "r3/json_io.hpp"
#include "r3/ppo_sandbox.hpp"
#include "r3/text_metrics.hpp"

namespace r3 {

/// Plain-text `key = value` configuration. `#` starts a comment line. Later
/// assignments (including command-line overrides) replace earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view content, const std::string& source = "<config>") {
    KeyValueConfig cfg;
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto body = text::detail::trim(line);
      if (body.empty() || body.front() == '#') continue;
      if (!cfg.assign(body))
        throw Error(ErrorCode::kConfig,
                    source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) { return parse(io::read_file(path), path); }

  /// Applies one "key=value" assignment; returns false if malformed.
  bool assign(std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) return false;
    const auto key = text::detail::trim(kv.substr(0, eq));
    if (key.empty()) return false;
    values_[std::string(key)] = std::string(text::detail::trim(kv.substr(eq + 1)));
    return true;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_or(const std::string& key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      double d = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument(*v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, key + ": expected a number, got \"" + *v + "\"");
    }
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size())
      throw Error(ErrorCode::kConfig, key + ": expected a nonnegative integer, got \"" + *v + "\"");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw Error(ErrorCode::kConfig, key + ": expected a boolean, got \"" + *v + "\"");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Sandbox training settings from `ppo.*` keys.
inline sandbox::PPOConfig ppo_config_from(const KeyValueConfig& kv) {
  sandbox::PPOConfig c;
  c.clip_ratio = kv.get_double("ppo.clip_ratio", c.clip_ratio);
  c.kl_coeff = kv.get_double("ppo.kl_coeff", c.kl_coeff);
  c.ppo_epochs = kv.get_uint("ppo.epochs", c.ppo_epochs);
  c.discount = kv.get_double("ppo.discount", c.discount);
  c.batch_episodes = kv.get_uint("ppo.batch_episodes", c.batch_episodes);
  c.learning_rate = kv.get_double("ppo.learning_rate", c.learning_rate);
  c.steps = kv.get_uint("ppo.steps", c.steps);
  c.seed = kv.get_uint("ppo.seed", c.seed);
  c.max_steps = kv.get_uint("ppo.max_steps", c.max_steps);
  const auto opt = kv.get_or("ppo.optimizer", "adam");
  if (opt == "adam") c.optimizer = sandbox::PPOConfig::Optimizer::kAdam;
  else if (opt == "sgd") c.optimizer = sandbox::PPOConfig::Optimizer::kSgd;
  else throw Error(ErrorCode::kConfig, "ppo.optimizer: expected adam|sgd, got \"" + opt + "\"");
  c.normalize_advantages = kv.get_bool("ppo.normalize_advantages", c.normalize_advantages);
  c.advantage_std_floor = kv.get_double("ppo.advantage_std_floor", c.advantage_std_floor);
  c.baseline_decay = kv.get_double("ppo.baseline_decay", c.baseline_decay);
  c.kl_target = kv.get_double("ppo.kl_target", c.kl_target);
  c.kl_horizon = kv.get_double("ppo.kl_horizon", c.kl_horizon);
  c.eval_episodes_per_task = kv.get_uint("ppo.eval_episodes_per_task", c.eval_episodes_per_task);
  c.relevance_threshold = kv.get_double("tau", c.relevance_threshold);
  c.validate();
  return c;
}

}  // namespace r3
