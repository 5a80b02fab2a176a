#pragma once

#include <memory>
#include <vector>

#include "mpac/env.hpp"
#include "mpac/policy.hpp"

namespace mpac {

struct Transition {
  Vec obs;
  int action;
  double reward;
  Vec next_obs;
  bool done;
  double logp;  // behavior log-prob at collection time
};

// On-policy transitions from n_steps of every parallel environment,
// stored env-major: index(e, t) = e * n_steps + t.
struct RolloutBatch {
  int n_envs = 0;
  int n_steps = 0;
  std::vector<Transition> transitions;
  Vec returns;     // R_t, filled by compute_returns
  Vec advantages;  // A_t = R_t - V(s_t); constants for all losses
  Vec bootstrap_values;
  bool has_advantages = false;

  int size() const { return n_envs * n_steps; }
  const Transition& at(int env, int t) const {
    return transitions[static_cast<std::size_t>(env) * n_steps + t];
  }
  Mat observations() const;
  Mat next_observations() const;
  std::vector<int> actions() const;
};

// Parallel environment set plus the per-env current observations that
// persist across collect calls (episodes straddle batches).
struct EnvPool {
  std::vector<std::unique_ptr<Env>> envs;
  std::vector<Vec> obs;

  static EnvPool make(const std::string& env_id, int n, std::uint64_t base_seed);
  int size() const { return static_cast<int>(envs.size()); }
};

// Steps every environment n_steps times, sampling actions from the
// current policy. Environments reaching the horizon are reset inline.
RolloutBatch collect(const ActorCritic& ac, EnvPool& pool, int n_steps,
                     Rng& action_stream);

// Backward n-step recursion per env segment:
//   R_t = r_t + gamma * (done_t ? 0 : R_{t+1}),  R_n = V(s_{t+n}).
// Then A_t = R_t - V(s_t).
void compute_returns(RolloutBatch& batch, const ActorCritic& ac, double gamma);

// Same recursion for an arbitrary per-transition reward vector and a
// standalone value net (used for the adversarial reward).
Vec discounted_returns(const RolloutBatch& batch, const Vec& rewards,
                       const Vec& bootstrap_per_env, double gamma);

struct A2cLoss {
  double total = 0.0;
  double policy_term = 0.0;  // mean -A_t log pi(a_t|s_t)
  double value_term = 0.0;   // value_coef * mean (R_t - V)^2
  double mean_entropy = 0.0;
  GradSet g_policy;
  GradSet g_value;
};

// Baseline advantage actor-critic loss with entropy bonus beta.
A2cLoss a2c_loss(const RolloutBatch& batch, const ActorCritic& ac, double beta,
                 double value_coef);

}  // namespace mpac
