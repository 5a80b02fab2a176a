#pragma once

#include <span>
#include <vector>

#include "mpac/preferences.hpp"
#include "mpac/rollout.hpp"

namespace mpac {

// Nonnegative multipliers, one per active preference, plus their step
// size and a per-epoch history for diagnostics.
struct LagrangeState {
  std::vector<PrefKind> keys;
  Vec lambda;  // lambda_k >= 0, aligned with keys
  double lr = 1e-4;

  struct HistoryRow {
    int epoch;
    std::vector<double> lambda;
    std::vector<double> mean_d;
  };
  std::vector<HistoryRow> history;

  static LagrangeState init(std::span<const PreferenceSpec> prefs, double lr);
  double value_for(PrefKind k) const;
};

struct MpacLossResult {
  double total = 0.0;
  double policy_term = 0.0;
  double value_term = 0.0;
  double mean_entropy = 0.0;
  std::vector<double> mean_d;  // one per preference, in preference order
  GradSet g_policy;
  GradSet g_value;
};

// Saddle-point loss of the constrained policy search:
//   L = mean[-A_t log pi(a_t|s_t)] - beta * mean H
//       + value_coef * mean (R_t - V)^2
//       + sum_k lambda_k (mean d_k - l_k)
// Multipliers are constants here; gradients flow to the policy through
// the policy term and every d_k. With no preferences this reduces to
// a2c_loss bit for bit.
MpacLossResult mpac_loss(const RolloutBatch& batch, const ActorCritic& ac,
                         const std::vector<ActivePreference>& prefs,
                         const LagrangeState& lam, double beta, double value_coef);

// Projected multiplier ascent:
//   lambda_k <- max(0, lambda_k + lr * (mean_d_k - l_k)).
// Rejects non-finite metric means without touching the state.
void lambda_step(LagrangeState& lam, std::span<const double> mean_d,
                 std::span<const double> thresholds);

}  // namespace mpac
