#include "mpac/rollout.hpp"

#include <cmath>

#include "loss_detail.hpp"
#include "mpac/errors.hpp"

namespace mpac {

Mat RolloutBatch::observations() const {
  Mat m(size(), transitions.front().obs.size());
  for (int i = 0; i < size(); ++i) m.row(i) = transitions[i].obs.transpose();
  return m;
}

Mat RolloutBatch::next_observations() const {
  Mat m(size(), transitions.front().next_obs.size());
  for (int i = 0; i < size(); ++i) m.row(i) = transitions[i].next_obs.transpose();
  return m;
}

std::vector<int> RolloutBatch::actions() const {
  std::vector<int> a(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) a[i] = transitions[i].action;
  return a;
}

EnvPool EnvPool::make(const std::string& env_id, int n, std::uint64_t base_seed) {
  if (n < 1) throw InvalidArgument("EnvPool: need at least one environment");
  EnvPool pool;
  for (int i = 0; i < n; ++i) {
    pool.envs.push_back(make_env(env_id));
    pool.obs.push_back(
        pool.envs.back()->reset(derive_seed(base_seed, 0xE0, static_cast<std::uint64_t>(i))));
  }
  return pool;
}

RolloutBatch collect(const ActorCritic& ac, EnvPool& pool, int n_steps,
                     Rng& action_stream) {
  if (n_steps < 1) throw InvalidArgument("collect: n_steps must be >= 1");
  if (pool.size() < 1) throw InvalidArgument("collect: empty environment pool");

  const int n_envs = pool.size();
  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.n_steps = n_steps;
  batch.transitions.resize(static_cast<std::size_t>(n_envs) * n_steps);

  Mat obs_now(n_envs, pool.obs[0].size());
  for (int t = 0; t < n_steps; ++t) {
    for (int e = 0; e < n_envs; ++e) obs_now.row(e) = pool.obs[e].transpose();
    const Mat logits = policy_logits(ac, obs_now);
    const Mat logp = log_softmax_rows(logits);
    for (int e = 0; e < n_envs; ++e) {
      Categorical dist;
      dist.logits = logits.row(e).transpose();
      dist.logp = logp.row(e).transpose();
      const int action = sample(dist, action_stream);
      StepResult sr = pool.envs[e]->step(action);
      Transition& tr = batch.transitions[static_cast<std::size_t>(e) * n_steps + t];
      tr.obs = pool.obs[e];
      tr.action = action;
      tr.reward = sr.reward;
      tr.next_obs = sr.obs;
      tr.done = sr.done;
      tr.logp = dist.logp(action);
      pool.obs[e] = sr.done ? pool.envs[e]->reset() : sr.obs;
    }
  }
  return batch;
}

Vec discounted_returns(const RolloutBatch& batch, const Vec& rewards,
                       const Vec& bootstrap_per_env, double gamma) {
  if (rewards.size() != batch.size())
    throw InvalidArgument("discounted_returns: reward count mismatch");
  Vec out(batch.size());
  for (int e = 0; e < batch.n_envs; ++e) {
    double running = bootstrap_per_env(e);
    for (int t = batch.n_steps - 1; t >= 0; --t) {
      const int i = e * batch.n_steps + t;
      running = rewards(i) + gamma * (batch.transitions[i].done ? 0.0 : running);
      out(i) = running;
    }
  }
  return out;
}

void compute_returns(RolloutBatch& batch, const ActorCritic& ac, double gamma) {
  if (gamma <= 0.0 || gamma >= 1.0)
    throw InvalidArgument("compute_returns: gamma must lie in (0, 1)");
  const Vec values = state_values(ac, batch.observations());

  // Bootstrap with V of the last next-observation of each env segment.
  Mat tail_obs(batch.n_envs, batch.transitions.front().next_obs.size());
  for (int e = 0; e < batch.n_envs; ++e)
    tail_obs.row(e) = batch.at(e, batch.n_steps - 1).next_obs.transpose();
  batch.bootstrap_values = state_values(ac, tail_obs);

  Vec rewards(batch.size());
  for (int i = 0; i < batch.size(); ++i) rewards(i) = batch.transitions[i].reward;

  batch.returns = discounted_returns(batch, rewards, batch.bootstrap_values, gamma);
  batch.advantages = batch.returns - values;
  batch.has_advantages = true;
}

namespace detail {

LossAssembly assemble_base(const RolloutBatch& batch, const ActorCritic& ac,
                           double beta, double value_coef) {
  if (!batch.has_advantages)
    throw InvalidState("loss: batch has no returns/advantages yet");
  const int b = batch.size();
  LossAssembly a;
  a.obs = batch.observations();
  a.logits = forward(ac.policy, a.obs, &a.tape_policy);
  a.logp = log_softmax_rows(a.logits);
  a.vpred = ac.shared_trunk
                ? Vec(forward(ac.value, a.tape_policy.post.back(), &a.tape_value).col(0))
                : Vec(forward(ac.value, a.obs, &a.tape_value).col(0));

  const double inv_b = 1.0 / static_cast<double>(b);
  a.dlogits = Mat::Zero(b, a.logits.cols());
  a.dv = Vec::Zero(b);

  double policy_sum = 0.0;
  double entropy_sum = 0.0;
  double value_sum = 0.0;
  for (int i = 0; i < b; ++i) {
    const int act = batch.transitions[i].action;
    const double adv = batch.advantages(i);
    policy_sum += -adv * a.logp(i, act);

    // d(-A log p_a)/dlogit_j = A (p_j - [j == a])
    const Eigen::RowVectorXd probs = a.logp.row(i).array().exp().matrix();
    a.dlogits.row(i) = (adv * inv_b) * probs;
    a.dlogits(i, act) -= adv * inv_b;

    const double h = -(probs.array() * a.logp.row(i).array()).sum();
    entropy_sum += h;
    if (beta != 0.0) {
      // d(-beta H)/dlogit_j = beta p_j (log p_j + H)
      a.dlogits.row(i) +=
          (beta * inv_b) * (probs.array() * (a.logp.row(i).array() + h)).matrix();
    }

    const double err = a.vpred(i) - batch.returns(i);
    value_sum += err * err;
    a.dv(i) = value_coef * 2.0 * err * inv_b;
  }
  a.policy_term = policy_sum * inv_b;
  a.mean_entropy = entropy_sum * inv_b;
  a.value_term = value_coef * value_sum * inv_b;
  return a;
}

void finish_gradients(const LossAssembly& a, const ActorCritic& ac,
                      GradSet* g_policy, GradSet* g_value) {
  *g_policy = backward(ac.policy, a.tape_policy, a.dlogits);
  if (ac.shared_trunk) {
    Mat dhidden;
    *g_value = backward(ac.value, a.tape_value, a.dv, &dhidden);
    GradSet trunk = backward_from_last_hidden(ac.policy, a.tape_policy, dhidden);
    g_policy->add_scaled(trunk, 1.0);
  } else {
    *g_value = backward(ac.value, a.tape_value, a.dv);
  }
}

}  // namespace detail

A2cLoss a2c_loss(const RolloutBatch& batch, const ActorCritic& ac, double beta,
                 double value_coef) {
  detail::LossAssembly a = detail::assemble_base(batch, ac, beta, value_coef);
  A2cLoss out;
  out.policy_term = a.policy_term;
  out.value_term = a.value_term;
  out.mean_entropy = a.mean_entropy;
  out.total = a.policy_term - beta * a.mean_entropy + a.value_term;
  if (!std::isfinite(out.total))
    throw InvalidState("a2c_loss: non-finite loss (policy=" +
                       std::to_string(a.policy_term) +
                       ", value=" + std::to_string(a.value_term) +
                       ", entropy=" + std::to_string(a.mean_entropy) + ")");
  detail::finish_gradients(a, ac, &out.g_policy, &out.g_value);
  return out;
}

}  // namespace mpac
