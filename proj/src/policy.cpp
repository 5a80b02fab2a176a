#include "mpac/policy.hpp"

#include <cmath>
#include <vector>

#include "mpac/errors.hpp"

namespace mpac {

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = std::log((logits.row(r).array() - mx).exp().sum()) + mx;
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Vec entropy_rows(const Mat& logp) {
  Vec h(logp.rows());
  for (Eigen::Index r = 0; r < logp.rows(); ++r)
    h(r) = -(logp.row(r).array().exp() * logp.row(r).array()).sum();
  return h;
}

Vec kl_rows(const Mat& logp_p, const Mat& logp_q) {
  if (logp_p.rows() != logp_q.rows() || logp_p.cols() != logp_q.cols())
    throw InvalidArgument("kl_rows: support mismatch");
  Vec d(logp_p.rows());
  for (Eigen::Index r = 0; r < logp_p.rows(); ++r)
    d(r) = (logp_p.row(r).array().exp() *
            (logp_p.row(r).array() - logp_q.row(r).array()))
               .sum();
  return d;
}

Vec kl_rows_floored(const Mat& logp_p, const Mat& logp_q, double floor_prob,
                    Mat* logq_floored) {
  if (logp_p.rows() != logp_q.rows() || logp_p.cols() != logp_q.cols())
    throw InvalidArgument("kl_rows_floored: support mismatch");
  const double log_floor = std::log(floor_prob);
  Mat lq = logp_q.cwiseMax(log_floor);
  Vec d = kl_rows(logp_p, lq);
  if (logq_floored) *logq_floored = std::move(lq);
  return d;
}

Categorical Categorical::from_logits(Vec l) {
  if (l.size() < 1) throw InvalidArgument("Categorical: empty logits");
  Categorical c;
  c.logp = log_softmax_rows(l.transpose()).row(0).transpose();
  c.logits = std::move(l);
  return c;
}

double Categorical::log_prob(int action) const {
  if (action < 0 || action >= size())
    throw InvalidArgument("log_prob: action index out of range");
  return logp(action);
}

double Categorical::entropy() const {
  return -(logp.array().exp() * logp.array()).sum();
}

double kl_divergence(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size()) throw InvalidArgument("kl: support mismatch");
  return (p.logp.array().exp() * (p.logp.array() - q.logp.array())).sum();
}

int sample(const Categorical& dist, Rng& rng) {
  const double u = rng.uniform();
  double cdf = 0.0;
  const int n = dist.size();
  for (int i = 0; i < n; ++i) {
    cdf += std::exp(dist.logp(i));
    if (u < cdf) return i;
  }
  return n - 1;  // guard against rounding in the cdf
}

int argmax_action(const Categorical& dist) {
  int best = 0;
  for (int i = 1; i < dist.size(); ++i)
    if (dist.logits(i) > dist.logits(best)) best = i;
  return best;
}

ActorCritic make_actor_critic(int obs_dim, int action_count,
                              std::span<const int> hidden, bool shared_trunk,
                              std::uint64_t seed) {
  if (obs_dim < 1 || action_count < 2)
    throw InvalidArgument("make_actor_critic: need obs_dim >= 1 and >= 2 actions");
  std::vector<int> policy_sizes;
  policy_sizes.push_back(obs_dim);
  policy_sizes.insert(policy_sizes.end(), hidden.begin(), hidden.end());
  policy_sizes.push_back(action_count);

  ActorCritic ac;
  ac.shared_trunk = shared_trunk;
  ac.policy = init_mlp(policy_sizes, derive_seed(seed, 0x11));
  if (shared_trunk) {
    if (hidden.empty())
      throw InvalidArgument("make_actor_critic: shared trunk needs a hidden layer");
    const int head_sizes[] = {hidden.back(), 1};
    ac.value = init_mlp(head_sizes, derive_seed(seed, 0x22));
  } else {
    std::vector<int> value_sizes = policy_sizes;
    value_sizes.back() = 1;
    ac.value = init_mlp(value_sizes, derive_seed(seed, 0x22));
  }
  return ac;
}

Categorical action_dist(const ActorCritic& ac, const Vec& obs) {
  return Categorical::from_logits(forward(ac.policy, obs));
}

Mat policy_logits(const ActorCritic& ac, const Mat& obs, ForwardTape* tape) {
  return forward(ac.policy, obs, tape);
}

Vec state_values(const ActorCritic& ac, const Mat& obs) {
  if (ac.shared_trunk) {
    ForwardTape tape;
    forward(ac.policy, obs, &tape);
    return forward(ac.value, tape.post.back()).col(0);
  }
  return forward(ac.value, obs).col(0);
}

}  // namespace mpac
