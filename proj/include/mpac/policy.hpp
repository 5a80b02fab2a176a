#pragma once

#include <span>

#include "mpac/net.hpp"
#include "mpac/rng.hpp"

namespace mpac {

// Categorical distribution over a finite action set, defined by logits.
// Log-probabilities are computed once with max-subtraction and cached.
struct Categorical {
  Vec logits;
  Vec logp;  // log-softmax of logits

  static Categorical from_logits(Vec l);
  int size() const { return static_cast<int>(logits.size()); }
  double log_prob(int action) const;
  double entropy() const;
  Vec probs() const { return logp.array().exp(); }
};

// KL(p || q), computed from log-softmax terms. Supports must match.
double kl_divergence(const Categorical& p, const Categorical& q);

int sample(const Categorical& dist, Rng& rng);
int argmax_action(const Categorical& dist);  // ties -> lowest index

// Row-wise kernels shared by the batched losses. Rows are samples.
Mat log_softmax_rows(const Mat& logits);
Vec entropy_rows(const Mat& logp);
// KL(p||q) per row given both log-prob matrices.
Vec kl_rows(const Mat& logp_p, const Mat& logp_q);
// KL with the target's probabilities floored (frozen near-deterministic
// targets stay finite). Returns per-row d and the floored target logs.
Vec kl_rows_floored(const Mat& logp_p, const Mat& logp_q, double floor_prob,
                    Mat* logq_floored = nullptr);

// Policy and value heads. Trunks are separate by default; with
// shared_trunk the value net is a linear head on the policy's last
// hidden activation.
struct ActorCritic {
  ParamSet policy;  // obs -> |A| logits
  ParamSet value;   // obs -> scalar, or head (last hidden -> scalar) when shared
  bool shared_trunk = false;

  int obs_dim() const { return policy.input_dim(); }
  int action_count() const { return policy.output_dim(); }
};

ActorCritic make_actor_critic(int obs_dim, int action_count,
                              std::span<const int> hidden, bool shared_trunk,
                              std::uint64_t seed);

Categorical action_dist(const ActorCritic& ac, const Vec& obs);
Mat policy_logits(const ActorCritic& ac, const Mat& obs, ForwardTape* tape = nullptr);

// State values for a batch of observations (no gradient bookkeeping).
Vec state_values(const ActorCritic& ac, const Mat& obs);

}  // namespace mpac
