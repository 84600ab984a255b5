#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "r3/json_io.hpp"
#include "r3/ppo_sandbox.hpp"

namespace r3::testing {

inline std::vector<sandbox::SandboxTask> sandbox_tasks() {
  return io::load_tasks(R3_DATA_DIR "/sandbox_tasks.jsonl");
}

struct GradientCheck {
  double max_rel_error = 0.0;  // max over logits of |a-n| / max(|a|, |n|, 1e-8)
  double min_kink_distance = 0.0;  // min |rho - (1 +- clip)| over the batch
  std::size_t visited_cells = 0;
};

/// Analytic dJ/dlogits against central differences (h = 1e-5) on a fixed
/// 24-episode batch. The evaluation point is a small perturbation of the
/// sampling policy, so every ratio stays away from the clip boundaries.
inline GradientCheck check_ppo_gradient(std::uint64_t seed, double beta = 0.2, double clip = 0.2) {
  const auto tasks = sandbox_tasks();
  auto embedder = std::make_shared<HashedEmbedder>();
  sandbox::TaskScorer scorer(tasks, embedder, RewardVariant::kR3OE, std::nullopt);
  Rng rng(seed);
  auto jitter = [&](sandbox::PolicySnapshot p, double scale) {
    for (auto& v : p.logits) v += scale * (2.0 * rng.uniform() - 1.0);
    return p;
  };
  const auto ref = sandbox::PolicySnapshot::uniform();
  const auto old = jitter(ref, 0.5);
  std::vector<std::size_t> idx(24);
  for (auto& i : idx) i = rng.index(tasks.size());
  const auto batch = sandbox::rollout(old, scorer, idx, seed);
  std::vector<double> adv(idx.size());
  for (auto& a : adv) a = 2.0 * rng.uniform() - 1.0;
  const auto k = sandbox::make_batch_constants(batch, adv, old.max_steps);
  const auto theta = jitter(old, 0.01);

  GradientCheck out;
  out.min_kink_distance = INFINITY;
  for (std::size_t i = 0; i < batch.episodes.size(); ++i) {
    const auto& ep = batch.episodes[i];
    double lp = 0.0;
    for (std::size_t t = 0; t < ep.actions.size(); ++t)
      lp += theta.log_probs(ep.type, t)[static_cast<std::size_t>(ep.actions[t])];
    const double rho = std::exp(lp - k.old_logprobs[i]);
    out.min_kink_distance =
        std::min({out.min_kink_distance, std::abs(rho - (1.0 + clip)), std::abs(rho - (1.0 - clip))});
  }
  for (double w : k.visit_weights) out.visited_cells += w > 0.0 ? 1 : 0;

  std::vector<double> grad;
  sandbox::ppo_objective(theta, ref, batch, k, clip, beta, &grad);
  constexpr double h = 1e-5;
  for (std::size_t j = 0; j < theta.logits.size(); ++j) {
    auto plus = theta, minus = theta;
    plus.logits[j] += h;
    minus.logits[j] -= h;
    const double num = (sandbox::ppo_objective(plus, ref, batch, k, clip, beta).objective -
                        sandbox::ppo_objective(minus, ref, batch, k, clip, beta).objective) /
                       (2.0 * h);
    const double err = std::abs(grad[j] - num) / std::max({std::abs(grad[j]), std::abs(num), 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, err);
  }
  return out;
}

}  // namespace r3::testing
