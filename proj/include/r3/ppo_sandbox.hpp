#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "r3/calibration.hpp"
#include "r3/embedding.hpp"
#include "r3/error.hpp"
#include "r3/eval_metrics.hpp"
#include "r3/query_type.hpp"
#include "r3/reward.hpp"
#include "r3/rng.hpp"
#include "r3/text_metrics.hpp"

// Desk-scale RL environment for studying reward hacking. A policy builds a
// response from at most `max_steps` segment actions; the episode reward is a
// reward variant evaluated on the assembled text. Training is clipped PPO on a
// per-episode likelihood ratio with an analytic KL penalty to a fixed
// reference policy.
namespace r3::sandbox {

enum class Action : std::uint8_t { kCopyQuery, kEmitRelevant, kEmitIrrelevant, kRepeatLast, kStop };

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::size_t kNumTypes = 2;
inline constexpr std::size_t kDefaultMaxSteps = 8;

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::kCopyQuery: return "COPY_QUERY";
    case Action::kEmitRelevant: return "EMIT_RELEVANT";
    case Action::kEmitIrrelevant: return "EMIT_IRRELEVANT";
    case Action::kRepeatLast: return "REPEAT_LAST";
    case Action::kStop: return "STOP";
  }
  return "STOP";
}

inline std::size_t type_index(QueryType t) { return t == QueryType::kOpenEnded ? 0 : 1; }

struct SandboxTask {
  std::string query;
  QueryType query_type = QueryType::kOpenEnded;
  std::vector<std::string> relevant_bank;
  std::vector<std::string> irrelevant_bank;
  std::string reference;

  /// Banks nonempty; every relevant sentence shares a word with the query and
  /// no irrelevant sentence does.
  void validate() const {
    if (relevant_bank.empty() || irrelevant_bank.empty())
      throw Error(ErrorCode::kInvalidArgument, "sandbox task banks must be nonempty: " + query);
    const auto qw = text::words_of(query);
    const std::set<std::string> qset(qw.begin(), qw.end());
    auto shares = [&](const std::string& s) {
      for (const auto& w : text::words_of(s))
        if (qset.count(w)) return true;
      return false;
    };
    for (const auto& s : relevant_bank)
      if (!shares(s))
        throw Error(ErrorCode::kInvalidArgument,
                    "relevant sentence shares no word with the query: " + s);
    for (const auto& s : irrelevant_bank)
      if (shares(s))
        throw Error(ErrorCode::kInvalidArgument, "irrelevant sentence shares a word with the query: " + s);
  }
};

/// Logit table indexed by (query type, step, action).
struct PolicySnapshot {
  std::size_t max_steps = kDefaultMaxSteps;
  std::vector<double> logits;

  static PolicySnapshot uniform(std::size_t max_steps = kDefaultMaxSteps) {
    PolicySnapshot p;
    p.max_steps = max_steps;
    p.logits.assign(kNumTypes * max_steps * kNumActions, 0.0);
    return p;
  }

  std::size_t offset(std::size_t type, std::size_t step) const {
    return (type * max_steps + step) * kNumActions;
  }
  std::span<const double> cell(std::size_t type, std::size_t step) const {
    return {logits.data() + offset(type, step), kNumActions};
  }
  std::span<double> cell(std::size_t type, std::size_t step) {
    return {logits.data() + offset(type, step), kNumActions};
  }

  std::array<double, kNumActions> probs(std::size_t type, std::size_t step) const {
    const auto z = cell(type, step);
    const double m = *std::max_element(z.begin(), z.end());
    std::array<double, kNumActions> p{};
    double s = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a) s += (p[a] = std::exp(z[a] - m));
    for (auto& v : p) v /= s;
    return p;
  }

  std::array<double, kNumActions> log_probs(std::size_t type, std::size_t step) const {
    const auto z = cell(type, step);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    std::array<double, kNumActions> lp{};
    for (std::size_t a = 0; a < kNumActions; ++a) lp[a] = z[a] - lse;
    return lp;
  }

  void validate() const {
    if (max_steps == 0 || logits.size() != kNumTypes * max_steps * kNumActions)
      throw Error(ErrorCode::kInvalidArgument, "policy logit table has the wrong shape");
    for (double v : logits)
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "policy has non-finite logits");
  }

  friend bool operator==(const PolicySnapshot&, const PolicySnapshot&) = default;
};

/// KL(p || q) between the categorical distributions of two logit cells.
inline double cell_kl(const PolicySnapshot& p, const PolicySnapshot& q, std::size_t type,
                      std::size_t step) {
  const auto lp = p.log_probs(type, step);
  const auto lq = q.log_probs(type, step);
  double kl = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  return kl;
}

/// Largest total-variation distance from the uniform distribution over cells.
inline double max_tv_from_uniform(const PolicySnapshot& p) {
  double worst = 0.0;
  for (std::size_t c = 0; c < kNumTypes; ++c)
    for (std::size_t t = 0; t < p.max_steps; ++t) {
      const auto pr = p.probs(c, t);
      double tv = 0.0;
      for (double v : pr) tv += std::abs(v - 1.0 / kNumActions);
      worst = std::max(worst, 0.5 * tv);
    }
  return worst;
}

/// Deterministic response assembly. Segments are joined by single spaces.
inline std::string assemble_response(const SandboxTask& task, std::span<const Action> actions) {
  std::string out;
  std::string last;
  bool has_last = false;
  std::size_t rel = 0, irr = 0;
  auto append = [&](const std::string& seg) {
    if (!out.empty()) out.push_back(' ');
    out.append(seg);
    last = seg;
    has_last = true;
  };
  for (Action a : actions) {
    switch (a) {
      case Action::kCopyQuery: append(task.query); break;
      case Action::kEmitRelevant:
        append(task.relevant_bank[rel++ % task.relevant_bank.size()]);
        break;
      case Action::kEmitIrrelevant:
        append(task.irrelevant_bank[irr++ % task.irrelevant_bank.size()]);
        break;
      case Action::kRepeatLast:
        if (has_last) {
          const std::string seg = last;
          append(seg);
        }
        break;
      case Action::kStop: return out;
    }
  }
  return out;
}

/// Scores assembled responses for a fixed task set. Query and reference
/// embeddings are computed once; results are identical to r3::score on the
/// same texts.
class TaskScorer {
 public:
  TaskScorer(std::span<const SandboxTask> tasks, std::shared_ptr<const Embedder> embedder,
             RewardVariant variant, std::optional<CalibrationMap> map, RewardOptions opts = {})
      : tasks_(tasks.begin(), tasks.end()),
        embedder_(std::move(embedder)),
        hashed_(dynamic_cast<const HashedEmbedder*>(embedder_.get())),
        variant_(variant),
        map_(std::move(map)),
        opts_(opts) {
    std::vector<std::string> texts;
    for (const auto& t : tasks_) {
      texts.push_back(last_user_turn(t.query));
      texts.push_back(t.reference);
    }
    auto vecs = embedder_->embed(texts);
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      query_vecs_.push_back(std::move(vecs[2 * i]));
      reference_vecs_.push_back(std::move(vecs[2 * i + 1]));
    }
  }

  RewardBreakdown score(std::size_t task_index, const std::string& response) const {
    const auto& task = tasks_.at(task_index);
    auto tok = text::tokenize(response);
    EmbeddingVector rv = hashed_ ? hashed_->embed_words(tok.words) : embedder_->embed_one(response);
    return score_embedded(task.query, task.query_type, query_vecs_[task_index], tok, rv,
                          &reference_vecs_[task_index], variant_, map_ ? &*map_ : nullptr, opts_);
  }

  const std::vector<SandboxTask>& tasks() const { return tasks_; }
  const Embedder& embedder() const { return *embedder_; }
  RewardVariant variant() const { return variant_; }
  const std::optional<CalibrationMap>& calibration() const { return map_; }
  const RewardOptions& options() const { return opts_; }

 private:
  std::vector<SandboxTask> tasks_;
  std::shared_ptr<const Embedder> embedder_;
  const HashedEmbedder* hashed_;
  RewardVariant variant_;
  std::optional<CalibrationMap> map_;
  RewardOptions opts_;
  std::vector<EmbeddingVector> query_vecs_;
  std::vector<EmbeddingVector> reference_vecs_;
};

struct Episode {
  std::size_t task = 0;
  std::size_t type = 0;
  std::vector<Action> actions;
  std::string response;
  RewardBreakdown reward;
  std::vector<double> step_logprobs;

  double logprob() const {
    double s = 0.0;
    for (double v : step_logprobs) s += v;
    return s;
  }
};

struct EpisodeBatch {
  std::vector<Episode> episodes;
};

/// Samples one episode per entry of `task_indices`. Episode i draws from its
/// own stream seeded with `seed ^ i`.
inline EpisodeBatch rollout(const PolicySnapshot& policy, const TaskScorer& scorer,
                            std::span<const std::size_t> task_indices, std::uint64_t seed) {
  policy.validate();
  EpisodeBatch batch;
  batch.episodes.reserve(task_indices.size());
  for (std::size_t i = 0; i < task_indices.size(); ++i) {
    Rng rng(seed ^ static_cast<std::uint64_t>(i));
    Episode ep;
    ep.task = task_indices[i];
    const auto& task = scorer.tasks().at(ep.task);
    ep.type = type_index(task.query_type);
    for (std::size_t t = 0; t < policy.max_steps; ++t) {
      const auto lp = policy.log_probs(ep.type, t);
      std::array<double, kNumActions> p{};
      for (std::size_t a = 0; a < kNumActions; ++a) p[a] = std::exp(lp[a]);
      const auto a = rng.categorical(p);
      ep.actions.push_back(static_cast<Action>(a));
      ep.step_logprobs.push_back(lp[a]);
      if (static_cast<Action>(a) == Action::kStop) break;
    }
    ep.response = assemble_response(task, ep.actions);
    ep.reward = scorer.score(ep.task, ep.response);
    batch.episodes.push_back(std::move(ep));
  }
  return batch;
}

struct PPOConfig {
  double clip_ratio = 0.2;
  double kl_coeff = 0.2;
  std::size_t ppo_epochs = 4;
  double discount = 1.0;
  std::size_t batch_episodes = 64;
  double learning_rate = 0.05;
  std::size_t steps = 500;
  std::uint64_t seed = 1;
  std::size_t max_steps = kDefaultMaxSteps;

  enum class Optimizer { kAdam, kSgd };
  Optimizer optimizer = Optimizer::kAdam;
  bool normalize_advantages = true;
  double advantage_std_floor = 1e-4;
  double baseline_decay = 0.9;
  // Adaptive KL: proportional controller toward kl_target when > 0.
  double kl_target = 0.0;
  double kl_horizon = 10000.0;

  std::size_t eval_episodes_per_task = 20;
  double relevance_threshold = eval::kDefaultRelevanceThreshold;

  void validate() const {
    if (!(clip_ratio > 0.0)) throw Error(ErrorCode::kConfig, "ppo.clip_ratio must be > 0");
    if (!(kl_coeff >= 0.0)) throw Error(ErrorCode::kConfig, "ppo.kl_coeff must be >= 0");
    if (!(discount > 0.0 && discount <= 1.0))
      throw Error(ErrorCode::kConfig, "ppo.discount must lie in (0, 1]");
    if (ppo_epochs == 0 || batch_episodes == 0 || max_steps == 0)
      throw Error(ErrorCode::kConfig, "ppo.epochs, ppo.batch_episodes and ppo.max_steps must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::kConfig, "ppo.learning_rate must be > 0");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
      throw Error(ErrorCode::kConfig, "ppo.baseline_decay must lie in [0, 1)");
  }
};

/// Quantities held fixed while optimizing one batch.
struct BatchConstants {
  std::vector<double> advantages;
  std::vector<double> old_logprobs;
  std::vector<double> visit_weights;  // [type][step], fraction of episodes reaching the cell
};

inline std::vector<double> visit_weights(const EpisodeBatch& batch, std::size_t max_steps) {
  std::vector<double> w(kNumTypes * max_steps, 0.0);
  if (batch.episodes.empty()) return w;
  const double inv = 1.0 / static_cast<double>(batch.episodes.size());
  for (const auto& ep : batch.episodes)
    for (std::size_t t = 0; t < ep.actions.size(); ++t) w[ep.type * max_steps + t] += inv;
  return w;
}

inline BatchConstants make_batch_constants(const EpisodeBatch& batch,
                                           std::vector<double> advantages,
                                           std::size_t max_steps) {
  BatchConstants c;
  c.advantages = std::move(advantages);
  for (const auto& ep : batch.episodes) c.old_logprobs.push_back(ep.logprob());
  c.visit_weights = visit_weights(batch, max_steps);
  return c;
}

struct ObjectiveTerms {
  double surrogate = 0.0;  // E[min(rho A, clip(rho) A)]
  double kl = 0.0;         // sum over cells of visit weight * KL(pi || ref)
  double objective = 0.0;  // surrogate - beta * kl
};

/// J(theta) = mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta * KL_w,
/// with rho_i = pi_theta(episode)/pi_old(episode). When `grad` is non-null it
/// receives dJ/dlogits (same layout as the logit table).
inline ObjectiveTerms ppo_objective(const PolicySnapshot& theta, const PolicySnapshot& ref,
                                    const EpisodeBatch& batch, const BatchConstants& k,
                                    double clip_ratio, double beta,
                                    std::vector<double>* grad = nullptr) {
  const std::size_t T = theta.max_steps;
  ObjectiveTerms out;
  if (grad) grad->assign(theta.logits.size(), 0.0);

  std::vector<std::array<double, kNumActions>> logp(kNumTypes * T);
  for (std::size_t c = 0; c < kNumTypes; ++c)
    for (std::size_t t = 0; t < T; ++t) logp[c * T + t] = theta.log_probs(c, t);

  const std::size_t n = batch.episodes.size();
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ep = batch.episodes[i];
    double lp = 0.0;
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
      lp += logp[ep.type * T + t][static_cast<std::size_t>(ep.actions[t])];
    const double rho = std::exp(lp - k.old_logprobs[i]);
    const double a = k.advantages[i];
    const double clipped = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio);
    const double unclipped_term = rho * a;
    const double clipped_term = clipped * a;
    out.surrogate += inv_n * std::min(unclipped_term, clipped_term);

    const bool active = a >= 0.0 ? rho <= 1.0 + clip_ratio : rho >= 1.0 - clip_ratio;
    if (grad && active && a != 0.0) {
      const double coef = inv_n * rho * a;
      for (std::size_t t = 0; t < ep.actions.size(); ++t) {
        const auto& cell_lp = logp[ep.type * T + t];
        double* g = grad->data() + theta.offset(ep.type, t);
        for (std::size_t act = 0; act < kNumActions; ++act)
          g[act] -= coef * std::exp(cell_lp[act]);
        g[static_cast<std::size_t>(ep.actions[t])] += coef;
      }
    }
  }

  for (std::size_t c = 0; c < kNumTypes; ++c)
    for (std::size_t t = 0; t < T; ++t) {
      const double w = k.visit_weights[c * T + t];
      if (w == 0.0) continue;
      const auto& lp = logp[c * T + t];
      const auto lq = ref.log_probs(c, t);
      double kl = 0.0;
      for (std::size_t a = 0; a < kNumActions; ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
      out.kl += w * kl;
      if (grad) {
        double* g = grad->data() + theta.offset(c, t);
        for (std::size_t a = 0; a < kNumActions; ++a)
          g[a] -= beta * w * std::exp(lp[a]) * (lp[a] - lq[a] - kl);
      }
    }
  out.objective = out.surrogate - beta * out.kl;
  return out;
}

/// Adam / SGD state carried across PPO steps.
struct OptimizerState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

struct StepDiagnostics {
  double mean_reward = 0.0;
  double kl = 0.0;
  double surrogate_loss = 0.0;
  double beta = 0.0;
  double copy_rate = 0.0;
  double mean_rp = 0.0;
};

/// Runs cfg.ppo_epochs full-batch ascent steps on ppo_objective, starting from
/// the sampling policy.
inline PolicySnapshot ppo_step(const PolicySnapshot& policy, const PolicySnapshot& ref,
                               const EpisodeBatch& batch, const BatchConstants& k,
                               const PPOConfig& cfg, double beta, OptimizerState& opt,
                               StepDiagnostics* diag = nullptr) {
  PolicySnapshot theta = policy;
  std::vector<double> grad;
  if (opt.m.size() != theta.logits.size()) {
    opt.m.assign(theta.logits.size(), 0.0);
    opt.v.assign(theta.logits.size(), 0.0);
    opt.t = 0;
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  for (std::size_t e = 0; e < cfg.ppo_epochs; ++e) {
    const auto terms = ppo_objective(theta, ref, batch, k, cfg.clip_ratio, beta, &grad);
    if (!std::isfinite(terms.objective))
      throw Error(ErrorCode::kNonFinite,
                  "non-finite PPO objective (surrogate " + std::to_string(terms.surrogate) +
                      ", kl " + std::to_string(terms.kl) + ")");
    if (cfg.optimizer == PPOConfig::Optimizer::kSgd) {
      for (std::size_t i = 0; i < grad.size(); ++i) theta.logits[i] += cfg.learning_rate * grad[i];
    } else {
      ++opt.t;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.t));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.t));
      for (std::size_t i = 0; i < grad.size(); ++i) {
        opt.m[i] = kBeta1 * opt.m[i] + (1.0 - kBeta1) * grad[i];
        opt.v[i] = kBeta2 * opt.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        theta.logits[i] += cfg.learning_rate * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + kEps);
      }
    }
  }
  const auto final_terms = ppo_objective(theta, ref, batch, k, cfg.clip_ratio, beta);
  if (!std::isfinite(final_terms.objective))
    throw Error(ErrorCode::kNonFinite, "non-finite PPO objective after update");
  for (double v : theta.logits)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite logits after update");
  if (diag) {
    diag->kl = final_terms.kl;
    diag->surrogate_loss = -final_terms.surrogate;
    diag->beta = beta;
  }
  return theta;
}

struct FinalStats {
  std::size_t episodes = 0;
  double copy_rate = 0.0;
  double mean_rp = 0.0;
  double mean_li = 0.0;
  double mean_reward = 0.0;
  double mean_relevance_proxy = 0.0;
  double mean_words = 0.0;
};

struct ExperimentReport {
  RewardVariant variant = RewardVariant::kR3;
  RewardOptions reward_options;
  PPOConfig config;
  std::optional<CalibrationMap> calibration;
  std::vector<StepDiagnostics> trajectory;
  PolicySnapshot final_policy;
  FinalStats final_stats;
};

/// Evaluates a policy with `per_task` rollouts on every task.
inline FinalStats evaluate_policy(const PolicySnapshot& policy, const TaskScorer& scorer,
                                  std::size_t per_task, std::uint64_t seed, double tau) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < scorer.tasks().size(); ++t)
    for (std::size_t k = 0; k < per_task; ++k) idx.push_back(t);
  const auto batch = rollout(policy, scorer, idx, seed);
  FinalStats s;
  s.episodes = batch.episodes.size();
  if (s.episodes == 0) return s;
  for (const auto& ep : batch.episodes) {
    const auto& task = scorer.tasks()[ep.task];
    s.copy_rate += ep.response == task.query ? 1.0 : 0.0;
    s.mean_rp += ep.reward.rp;
    s.mean_li += ep.reward.li;
    s.mean_reward += ep.reward.final_reward;
    s.mean_words += ep.reward.li * 100.0;
    if (!text::split_sentences(ep.response).empty())
      s.mean_relevance_proxy +=
          eval::relevant_sentence_ratio(task.query, ep.response, scorer.embedder(), tau).ratio;
  }
  const double n = static_cast<double>(s.episodes);
  s.copy_rate /= n;
  s.mean_rp /= n;
  s.mean_li /= n;
  s.mean_reward /= n;
  s.mean_words /= n;
  s.mean_relevance_proxy /= n;
  return s;
}

inline bool needs_calibration(RewardVariant v, std::span<const SandboxTask> tasks) {
  if (v != RewardVariant::kR3) return false;
  return std::any_of(tasks.begin(), tasks.end(),
                     [](const auto& t) { return t.query_type == QueryType::kClosedEnded; });
}

/// Fits F on (reference, response) pairs sampled from the uniform policy.
inline CalibrationMap fit_sandbox_calibration(std::span<const SandboxTask> tasks,
                                              std::shared_ptr<const Embedder> embedder,
                                              std::size_t max_steps, std::uint64_t seed,
                                              std::size_t episodes_per_task = 20) {
  TaskScorer scorer(tasks, embedder, RewardVariant::kLiOnly, std::nullopt);
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t k = 0; k < episodes_per_task; ++k) idx.push_back(t);
  const auto batch = rollout(PolicySnapshot::uniform(max_steps), scorer, idx, seed);
  std::vector<double> ry, li;
  for (const auto& ep : batch.episodes) {
    ry.push_back(*ep.reward.r_y);
    li.push_back(ep.reward.li);
  }
  return fit_calibration(ry, li, 5.0, 95.0, embedder->dim());
}

/// Trains from the uniform policy (which is also the fixed reference).
inline ExperimentReport run_experiment(RewardVariant variant, std::span<const SandboxTask> tasks,
                                       const PPOConfig& cfg,
                                       std::shared_ptr<const Embedder> embedder,
                                       std::optional<CalibrationMap> calibration = std::nullopt,
                                       RewardOptions reward_opts = {}) {
  cfg.validate();
  if (tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "no sandbox tasks");
  for (const auto& t : tasks) t.validate();
  if (!calibration && needs_calibration(variant, tasks))
    calibration = fit_sandbox_calibration(tasks, embedder, cfg.max_steps,
                                          splitmix64(cfg.seed ^ 0xca11b7a7e0ULL));

  TaskScorer scorer(tasks, embedder, variant, calibration, reward_opts);
  ExperimentReport report;
  report.variant = variant;
  report.reward_options = reward_opts;
  report.config = cfg;
  report.calibration = calibration;

  const PolicySnapshot ref = PolicySnapshot::uniform(cfg.max_steps);
  PolicySnapshot policy = ref;
  OptimizerState opt;
  double beta = cfg.kl_coeff;
  std::optional<double> baseline;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::uint64_t step_seed = splitmix64(cfg.seed * 0x100000001b3ULL + step);
    Rng pick(step_seed);
    std::vector<std::size_t> idx(cfg.batch_episodes);
    for (auto& i : idx) i = pick.index(tasks.size());
    const auto batch = rollout(policy, scorer, idx, splitmix64(step_seed));

    const std::size_t n = batch.episodes.size();
    std::vector<double> returns(n);
    double mean_return = 0.0;
    StepDiagnostics diag;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ep = batch.episodes[i];
      const double discount =
          std::pow(cfg.discount, static_cast<double>(ep.actions.size()) - 1.0);
      returns[i] = discount * ep.reward.final_reward;
      mean_return += returns[i] / static_cast<double>(n);
      diag.mean_reward += ep.reward.final_reward / static_cast<double>(n);
      diag.mean_rp += ep.reward.rp / static_cast<double>(n);
      diag.copy_rate += (ep.response == tasks[ep.task].query ? 1.0 : 0.0) / static_cast<double>(n);
    }
    if (!baseline) baseline = mean_return;

    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) adv[i] = returns[i] - *baseline;
    if (cfg.normalize_advantages) {
      double var = 0.0;
      for (double r : returns) var += (r - mean_return) * (r - mean_return);
      const double sd = std::sqrt(var / static_cast<double>(n));
      const double scale = 1.0 / std::max(sd, cfg.advantage_std_floor);
      for (auto& a : adv) a *= scale;
    }
    *baseline = cfg.baseline_decay * *baseline + (1.0 - cfg.baseline_decay) * mean_return;

    const auto constants = make_batch_constants(batch, std::move(adv), cfg.max_steps);
    policy = ppo_step(policy, ref, batch, constants, cfg, beta, opt, &diag);

    if (cfg.kl_target > 0.0) {
      const double err = std::clamp(diag.kl / cfg.kl_target - 1.0, -0.2, 0.2);
      beta *= 1.0 + err * static_cast<double>(n) / cfg.kl_horizon;
    }
    report.trajectory.push_back(diag);
  }

  report.final_policy = policy;
  report.final_stats = evaluate_policy(policy, scorer, cfg.eval_episodes_per_task,
                                       splitmix64(cfg.seed ^ 0xe7a1e7a1ULL), cfg.relevance_threshold);
  return report;
}

}  // namespace r3::sandbox
