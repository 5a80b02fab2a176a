#include "mpac/preferences.hpp"

#include <cmath>
#include <vector>

#include "mpac/errors.hpp"

namespace mpac {

const char* pref_kind_name(PrefKind k) {
  switch (k) {
    case PrefKind::Entropy: return "entropy";
    case PrefKind::Conserve: return "conserve";
    case PrefKind::Reference: return "reference";
    case PrefKind::Gail: return "gail";
  }
  return "?";
}

std::optional<PrefKind> pref_kind_from_name(std::string_view name) {
  if (name == "entropy") return PrefKind::Entropy;
  if (name == "conserve") return PrefKind::Conserve;
  if (name == "reference") return PrefKind::Reference;
  if (name == "gail") return PrefKind::Gail;
  return std::nullopt;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

MetricEval eval_kl_metric(const Mat& logp_live, const Mat& logp_target) {
  if (logp_live.rows() != logp_target.rows() ||
      logp_live.cols() != logp_target.cols())
    throw InvalidArgument("eval_kl_metric: support mismatch");
  MetricEval m;
  m.d = kl_rows(logp_live, logp_target);
  m.dlogits.resize(logp_live.rows(), logp_live.cols());
  for (Eigen::Index r = 0; r < logp_live.rows(); ++r) {
    // d(KL)/dz_j = p_j (log p_j - log q_j - KL)
    m.dlogits.row(r) = (logp_live.row(r).array().exp() *
                        (logp_live.row(r).array() - logp_target.row(r).array() -
                         m.d(r)))
                           .matrix();
  }
  return m;
}

MetricEval eval_gail_metric(const Mat& logp_live, std::span<const int> actions,
                            const Vec& coeffs) {
  if (static_cast<Eigen::Index>(actions.size()) != logp_live.rows() ||
      coeffs.size() != logp_live.rows())
    throw InvalidArgument("eval_gail_metric: batch size mismatch");
  MetricEval m;
  m.d.resize(logp_live.rows());
  m.dlogits.resize(logp_live.rows(), logp_live.cols());
  for (Eigen::Index r = 0; r < logp_live.rows(); ++r) {
    const int a = actions[static_cast<std::size_t>(r)];
    m.d(r) = -logp_live(r, a) * coeffs(r);
    // d(-c log p_a)/dz_j = c (p_j - [j == a])
    m.dlogits.row(r) = coeffs(r) * logp_live.row(r).array().exp().matrix();
    m.dlogits(r, a) -= coeffs(r);
  }
  return m;
}

namespace {

Mat uniform_logp(Eigen::Index rows, Eigen::Index n_actions) {
  return Mat::Constant(rows, n_actions, -std::log(static_cast<double>(n_actions)));
}

Mat frozen_logp_floored(const ParamSet& target, const Mat& obs) {
  const Mat logits = forward(target, obs);
  const Mat logp = log_softmax_rows(logits);
  return logp.cwiseMax(std::log(kTargetProbFloor));
}

GradSet metric_mean_grad(const ActorCritic& ac, const Mat& obs,
                         const MetricEval& m) {
  ForwardTape tape;
  forward(ac.policy, obs, &tape);
  const double inv_b = 1.0 / static_cast<double>(obs.rows());
  return backward(ac.policy, tape, inv_b * m.dlogits);
}

}  // namespace

Vec d_entropy(const ActorCritic& ac, const Mat& obs) {
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  return kl_rows(logp, uniform_logp(obs.rows(), ac.action_count()));
}

Vec d_conserve(const ActorCritic& ac, const ParamSet& old_policy, const Mat& obs) {
  if (!old_policy.same_shape(ac.policy))
    throw InvalidArgument("d_conserve: old policy shape mismatch");
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  return kl_rows(logp, frozen_logp_floored(old_policy, obs));
}

Vec d_reference(const ActorCritic& ac, const ParamSet& ref_policy, const Mat& obs) {
  if (ref_policy.input_dim() != ac.policy.input_dim() ||
      ref_policy.output_dim() != ac.policy.output_dim())
    throw InvalidArgument("d_reference: reference maps a different space");
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  return kl_rows(logp, frozen_logp_floored(ref_policy, obs));
}

Vec d_gail(const ActorCritic& ac, const RolloutBatch& batch, const Vec& a_gail) {
  const Mat logp = log_softmax_rows(policy_logits(ac, batch.observations()));
  const auto actions = batch.actions();
  return eval_gail_metric(logp, actions, a_gail).d;
}

GradSet d_entropy_mean_grad(const ActorCritic& ac, const Mat& obs, Vec* d) {
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  MetricEval m = eval_kl_metric(logp, uniform_logp(obs.rows(), ac.action_count()));
  if (d) *d = m.d;
  return metric_mean_grad(ac, obs, m);
}

GradSet d_conserve_mean_grad(const ActorCritic& ac, const ParamSet& old_policy,
                             const Mat& obs, Vec* d) {
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  MetricEval m = eval_kl_metric(logp, frozen_logp_floored(old_policy, obs));
  if (d) *d = m.d;
  return metric_mean_grad(ac, obs, m);
}

GradSet d_reference_mean_grad(const ActorCritic& ac, const ParamSet& ref_policy,
                              const Mat& obs, Vec* d) {
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  MetricEval m = eval_kl_metric(logp, frozen_logp_floored(ref_policy, obs));
  if (d) *d = m.d;
  return metric_mean_grad(ac, obs, m);
}

GradSet d_gail_mean_grad(const ActorCritic& ac, const RolloutBatch& batch,
                         const Vec& a_gail, Vec* d) {
  const Mat obs = batch.observations();
  const Mat logp = log_softmax_rows(policy_logits(ac, obs));
  const auto actions = batch.actions();
  MetricEval m = eval_gail_metric(logp, actions, a_gail);
  if (d) *d = m.d;
  return metric_mean_grad(ac, obs, m);
}

void polyak_update(ParamSet& target, const ParamSet& live, double eta) {
  if (!target.same_shape(live))
    throw InvalidArgument("polyak_update: shape mismatch");
  if (eta <= 0.0 || eta >= 1.0)
    throw InvalidArgument("polyak_update: eta must lie in (0, 1)");
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    target.layers[i].weight =
        eta * live.layers[i].weight + (1.0 - eta) * target.layers[i].weight;
    target.layers[i].bias =
        eta * live.layers[i].bias + (1.0 - eta) * target.layers[i].bias;
  }
}

GailSubsystem make_gail(int obs_dim, int action_count, std::span<const int> hidden,
                        double disc_lr, double value_lr, std::uint64_t seed) {
  GailSubsystem g;
  g.action_count = action_count;
  std::vector<int> disc_sizes;
  disc_sizes.push_back(obs_dim + action_count);
  disc_sizes.insert(disc_sizes.end(), hidden.begin(), hidden.end());
  disc_sizes.push_back(1);
  g.disc = init_mlp(disc_sizes, derive_seed(seed, 0xD1));
  std::vector<int> value_sizes;
  value_sizes.push_back(obs_dim);
  value_sizes.insert(value_sizes.end(), hidden.begin(), hidden.end());
  value_sizes.push_back(1);
  g.value = init_mlp(value_sizes, derive_seed(seed, 0xD2));
  g.disc_opt = OptimizerState::adam(g.disc, disc_lr);
  g.value_opt = OptimizerState::adam(g.value, value_lr);
  return g;
}

Mat state_action_matrix(const Mat& obs, std::span<const int> actions,
                        int action_count) {
  if (static_cast<Eigen::Index>(actions.size()) != obs.rows())
    throw InvalidArgument("state_action_matrix: row count mismatch");
  Mat sa = Mat::Zero(obs.rows(), obs.cols() + action_count);
  sa.leftCols(obs.cols()) = obs;
  for (Eigen::Index r = 0; r < obs.rows(); ++r) {
    const int a = actions[static_cast<std::size_t>(r)];
    if (a < 0 || a >= action_count)
      throw InvalidArgument("state_action_matrix: action index out of range");
    sa(r, obs.cols() + a) = 1.0;
  }
  return sa;
}

double gail_discriminator_loss(const GailSubsystem& g, const Mat& demo_sa,
                               const Mat& agent_sa, GradSet* grads) {
  if (demo_sa.rows() == 0 || agent_sa.rows() == 0)
    throw InvalidArgument("gail discriminator: both batches must be nonempty");
  const Eigen::Index ne = demo_sa.rows();
  const Eigen::Index na = agent_sa.rows();
  Mat stacked(ne + na, demo_sa.cols());
  stacked.topRows(ne) = demo_sa;
  stacked.bottomRows(na) = agent_sa;

  ForwardTape tape;
  const Vec z = forward(g.disc, stacked, &tape).col(0);
  const double inv_n = 1.0 / static_cast<double>(ne + na);
  double loss = 0.0;
  Vec dz(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const bool expert = i < ne;
    loss += expert ? softplus(-z(i)) : softplus(z(i));
    dz(i) = (sigmoid(z(i)) - (expert ? 1.0 : 0.0)) * inv_n;
  }
  loss *= inv_n;
  if (grads) *grads = backward(g.disc, tape, dz);
  return loss;
}

double gail_discriminator_step(GailSubsystem& g, const Mat& demo_sa,
                               const Mat& agent_sa) {
  GradSet grads;
  const double loss = gail_discriminator_loss(g, demo_sa, agent_sa, &grads);
  apply_step(g.disc, grads, g.disc_opt);
  return loss;
}

Vec gail_reward(const GailSubsystem& g, const Mat& sa) {
  const Vec z = forward(g.disc, sa).col(0);
  Vec r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) r(i) = softplus(z(i));
  return r;
}

Vec gail_advantage(GailSubsystem& g, const RolloutBatch& batch, double gamma) {
  const Mat obs = batch.observations();
  const Mat next_obs = batch.next_observations();
  const auto actions = batch.actions();
  const Mat sa = state_action_matrix(obs, actions, g.action_count);

  const Vec r = gail_reward(g, sa);
  ForwardTape value_tape;
  const Vec v = forward(g.value, obs, &value_tape).col(0);
  const Vec v_next = forward(g.value, next_obs).col(0);

  Vec adv(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    const double not_done = batch.transitions[i].done ? 0.0 : 1.0;
    adv(i) = r(i) + gamma * v_next(i) * not_done - v(i);
  }

  // One regression step of V_gail toward n-step discounted r_gail returns.
  Vec bootstrap(batch.n_envs);
  for (int e = 0; e < batch.n_envs; ++e)
    bootstrap(e) = v_next(e * batch.n_steps + batch.n_steps - 1);
  const Vec targets = discounted_returns(batch, r, bootstrap, gamma);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Vec dv = 2.0 * inv_b * (v - targets);
  GradSet grads = backward(g.value, value_tape, dv);
  apply_step(g.value, grads, g.value_opt);

  return adv;
}

double gail_accuracy(const GailSubsystem& g, const Mat& demo_sa, const Mat& agent_sa) {
  const Vec ze = forward(g.disc, demo_sa).col(0);
  const Vec za = forward(g.disc, agent_sa).col(0);
  double correct = 0.0;
  for (Eigen::Index i = 0; i < ze.size(); ++i) correct += ze(i) > 0.0 ? 1.0 : 0.0;
  for (Eigen::Index i = 0; i < za.size(); ++i) correct += za(i) <= 0.0 ? 1.0 : 0.0;
  return correct / static_cast<double>(ze.size() + za.size());
}

}  // namespace mpac
