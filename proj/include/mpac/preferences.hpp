#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>

#include "mpac/policy.hpp"
#include "mpac/rollout.hpp"

namespace mpac {

enum class PrefKind { Entropy, Conserve, Reference, Gail };

const char* pref_kind_name(PrefKind k);
std::optional<PrefKind> pref_kind_from_name(std::string_view name);

// One preference: kind, threshold l_k, per-kind configuration.
struct PreferenceSpec {
  PrefKind kind = PrefKind::Entropy;
  double threshold = 0.0;
  // conserve
  double eta = 0.01;
  // reference / gail
  std::string demo_path;
  // reference: behavior-cloning settings for the frozen pi_ref
  int bc_epochs = 20;
  int bc_batch = 64;
  double bc_lr = 1e-4;
  double bc_dropout = 0.2;
  // gail
  double disc_lr = 1e-4;
  double gail_value_lr = 1e-4;
  int disc_batch = 256;
};

// Frozen targets are floored at this probability inside KL so metrics
// stay finite against near-deterministic targets.
inline constexpr double kTargetProbFloor = 1e-8;

// Adversarial imitation subsystem: a discriminator over (obs, one-hot
// action) pairs and a value net for the adversarial reward.
struct GailSubsystem {
  ParamSet disc;   // obs + |A| -> 1 logit; sigmoid(D) in (0,1)
  ParamSet value;  // obs -> scalar V_gail
  OptimizerState disc_opt;
  OptimizerState value_opt;
  int action_count = 0;
};

GailSubsystem make_gail(int obs_dim, int action_count, std::span<const int> hidden,
                        double disc_lr, double value_lr, std::uint64_t seed);

Mat state_action_matrix(const Mat& obs, std::span<const int> actions,
                        int action_count);

// ---- preference metrics d_k ------------------------------------------------

// KL(pi_theta(.|s) || uniform) per state.
Vec d_entropy(const ActorCritic& ac, const Mat& obs);
// KL(pi_theta(.|s) || pi_theta'(.|s)); the old policy is frozen.
Vec d_conserve(const ActorCritic& ac, const ParamSet& old_policy, const Mat& obs);
// KL(pi_theta(.|s) || pi_ref(.|s)); the reference is frozen.
Vec d_reference(const ActorCritic& ac, const ParamSet& ref_policy, const Mat& obs);
// -log pi(a_t|s_t) * A_gail_t per transition; A_gail entries are constants.
Vec d_gail(const ActorCritic& ac, const RolloutBatch& batch, const Vec& a_gail);

// Gradient of mean d_k w.r.t. the live policy parameters (targets are
// frozen and contribute nothing).
GradSet d_entropy_mean_grad(const ActorCritic& ac, const Mat& obs, Vec* d = nullptr);
GradSet d_conserve_mean_grad(const ActorCritic& ac, const ParamSet& old_policy,
                             const Mat& obs, Vec* d = nullptr);
GradSet d_reference_mean_grad(const ActorCritic& ac, const ParamSet& ref_policy,
                              const Mat& obs, Vec* d = nullptr);
GradSet d_gail_mean_grad(const ActorCritic& ac, const RolloutBatch& batch,
                         const Vec& a_gail, Vec* d = nullptr);

// theta' <- eta * theta + (1 - eta) * theta', elementwise.
void polyak_update(ParamSet& target, const ParamSet& live, double eta);

// ---- gail operations -------------------------------------------------------

// Mean binary cross-entropy of the discriminator on labeled pairs
// (expert 1, agent 0), optionally with its parameter gradients.
double gail_discriminator_loss(const GailSubsystem& g, const Mat& demo_sa,
                               const Mat& agent_sa, GradSet* grads = nullptr);

// One binary cross-entropy step: expert pairs labeled 1, agent pairs
// labeled 0. Returns the mean loss before the step.
double gail_discriminator_step(GailSubsystem& g, const Mat& demo_sa,
                               const Mat& agent_sa);

// Adversarial reward r_gail = -log(1 - sigmoid(D(s,a))) per row.
Vec gail_reward(const GailSubsystem& g, const Mat& sa);

// One-step advantages from the adversarial reward,
//   A_gail = r_gail + gamma * V_gail(s') * (1 - done) - V_gail(s),
// then regresses V_gail one step toward n-step discounted r_gail returns.
Vec gail_advantage(GailSubsystem& g, const RolloutBatch& batch, double gamma);

// Fraction of pairs classified correctly (expert -> 1, agent -> 0).
double gail_accuracy(const GailSubsystem& g, const Mat& demo_sa, const Mat& agent_sa);

// ---- per-sample metric kernels (shared with the saddle-point loss) ---------

struct MetricEval {
  Vec d;        // per-sample metric
  Mat dlogits;  // per-sample d(d_i)/d(live logits row i), unscaled
};

// d = KL(softmax(logits) || q) rows, with fixed target log-probs.
MetricEval eval_kl_metric(const Mat& logp_live, const Mat& logp_target);
// d = -log p(a_i) * c_i rows.
MetricEval eval_gail_metric(const Mat& logp_live, std::span<const int> actions,
                            const Vec& coeffs);

// Runtime state of one active preference inside a training run.
struct ActivePreference {
  PreferenceSpec spec;
  ParamSet target;                      // conserve theta', reference pi_ref
  std::shared_ptr<GailSubsystem> gail;  // set when kind == Gail
  Vec a_gail;                           // per-minibatch advantages for d_gail
};

}  // namespace mpac
