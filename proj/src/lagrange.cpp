#include "mpac/lagrange.hpp"

#include <cmath>
#include <string>

#include "loss_detail.hpp"
#include "mpac/errors.hpp"

namespace mpac {

LagrangeState LagrangeState::init(std::span<const PreferenceSpec> prefs, double lr) {
  if (lr <= 0.0) throw InvalidArgument("LagrangeState: step size must be > 0");
  LagrangeState s;
  s.lr = lr;
  s.keys.reserve(prefs.size());
  for (const auto& p : prefs) s.keys.push_back(p.kind);
  s.lambda = Vec::Zero(static_cast<Eigen::Index>(prefs.size()));
  return s;
}

double LagrangeState::value_for(PrefKind k) const {
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i] == k) return lambda(static_cast<Eigen::Index>(i));
  throw InvalidArgument(std::string("no multiplier for preference '") +
                        pref_kind_name(k) + "'");
}

MpacLossResult mpac_loss(const RolloutBatch& batch, const ActorCritic& ac,
                         const std::vector<ActivePreference>& prefs,
                         const LagrangeState& lam, double beta, double value_coef) {
  if (static_cast<std::size_t>(lam.lambda.size()) != prefs.size())
    throw InvalidArgument("mpac_loss: multiplier count does not match preferences");

  detail::LossAssembly a = detail::assemble_base(batch, ac, beta, value_coef);

  MpacLossResult out;
  out.policy_term = a.policy_term;
  out.value_term = a.value_term;
  out.mean_entropy = a.mean_entropy;
  out.total = a.policy_term - beta * a.mean_entropy + a.value_term;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto actions = batch.actions();
  for (std::size_t k = 0; k < prefs.size(); ++k) {
    const ActivePreference& p = prefs[k];
    MetricEval m;
    switch (p.spec.kind) {
      case PrefKind::Entropy:
        m = eval_kl_metric(a.logp,
                           Mat::Constant(a.logp.rows(), a.logp.cols(),
                                         -std::log(static_cast<double>(a.logp.cols()))));
        break;
      case PrefKind::Conserve:
      case PrefKind::Reference: {
        const Mat target_logp =
            log_softmax_rows(forward(p.target, a.obs)).cwiseMax(std::log(kTargetProbFloor));
        m = eval_kl_metric(a.logp, target_logp);
        break;
      }
      case PrefKind::Gail: {
        if (p.a_gail.size() != batch.size())
          throw InvalidState("mpac_loss: gail advantages not computed for this batch");
        m = eval_gail_metric(a.logp, actions, p.a_gail);
        break;
      }
    }
    const double mean_d = m.d.mean();
    if (!std::isfinite(mean_d))
      throw InvalidState(std::string("mpac_loss: non-finite metric for preference '") +
                         pref_kind_name(p.spec.kind) + "'");
    out.mean_d.push_back(mean_d);
    const double lk = lam.lambda(static_cast<Eigen::Index>(k));
    out.total += lk * (mean_d - p.spec.threshold);
    if (lk != 0.0) a.dlogits += (lk * inv_b) * m.dlogits;
  }

  if (!std::isfinite(out.total))
    throw InvalidState("mpac_loss: non-finite loss (policy=" +
                       std::to_string(a.policy_term) +
                       ", value=" + std::to_string(a.value_term) + ")");
  detail::finish_gradients(a, ac, &out.g_policy, &out.g_value);
  return out;
}

void lambda_step(LagrangeState& lam, std::span<const double> mean_d,
                 std::span<const double> thresholds) {
  if (mean_d.size() != lam.keys.size() || thresholds.size() != lam.keys.size())
    throw InvalidArgument("lambda_step: need one mean and threshold per preference");
  for (double d : mean_d)
    if (!std::isfinite(d))
      throw NumericError("lambda_step: non-finite preference mean; step rejected");
  for (std::size_t k = 0; k < lam.keys.size(); ++k) {
    const Eigen::Index i = static_cast<Eigen::Index>(k);
    lam.lambda(i) = std::max(0.0, lam.lambda(i) + lam.lr * (mean_d[k] - thresholds[k]));
  }
}

}  // namespace mpac
