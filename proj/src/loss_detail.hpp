#pragma once

// Internal loss assembly shared by a2c_loss and mpac_loss. Both build
// the same base terms through this code path so that an M-PAC run with
// no preferences reproduces plain A2C bit for bit.

#include "mpac/policy.hpp"
#include "mpac/rollout.hpp"

namespace mpac::detail {

struct LossAssembly {
  Mat obs;             // B x obs_dim
  Mat logits;          // B x A
  Mat logp;            // log-softmax rows
  ForwardTape tape_policy;
  Vec vpred;           // B
  ForwardTape tape_value;  // full value net, or head when shared trunk
  double policy_term = 0.0;
  double value_term = 0.0;
  double mean_entropy = 0.0;
  Mat dlogits;         // d(base policy terms)/dlogits, already 1/B scaled
  Vec dv;              // d(value term)/dV, already 1/B scaled
};

LossAssembly assemble_base(const RolloutBatch& batch, const ActorCritic& ac,
                           double beta, double value_coef);

// Backward passes; adds the shared-trunk value path into g_policy when
// the trunks are shared.
void finish_gradients(const LossAssembly& a, const ActorCritic& ac,
                      GradSet* g_policy, GradSet* g_value);

}  // namespace mpac::detail
