#include "mpac/policy.hpp"

#include <cmath>

#include "doctest.h"
#include "mpac/errors.hpp"
#include "mpac/preferences.hpp"
#include "oracles.hpp"

using namespace mpac;

namespace {
Vec make_vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (double x : vals) v(i++) = x;
  return v;
}
}  // namespace

TEST_CASE("softmax: hand-computed probabilities") {
  Categorical d = Categorical::from_logits(make_vec({0.0, 0.0, std::log(3.0)}));
  const Vec p = d.probs();
  CHECK(p(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p(2) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero-weight policy net yields the uniform distribution") {
  const int sizes[] = {3, 9};
  ActorCritic ac;
  ac.policy = init_mlp(sizes, 0);
  for (auto& l : ac.policy.layers) l.weight.setZero();
  const int vsizes[] = {3, 1};
  ac.value = init_mlp(vsizes, 0);
  Categorical d = action_dist(ac, make_vec({0.3, -1.0, 2.0}));
  for (int a = 0; a < 9; ++a)
    CHECK(d.probs()(a) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one for arbitrary logits") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    Vec logits(1 + static_cast<int>(rng.below(12)));
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      logits(i) = rng.uniform(-30.0, 30.0);
    Categorical d = Categorical::from_logits(logits);
    CHECK(d.probs().sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.probs().minCoeff() > 0.0);
  }
}

TEST_CASE("log_prob: uniform, stability, high-precision value") {
  Categorical uniform = Categorical::from_logits(Vec::Zero(4));
  for (int a = 0; a < 4; ++a)
    CHECK(uniform.log_prob(a) == doctest::Approx(-std::log(4.0)).epsilon(1e-12));

  Categorical extreme = Categorical::from_logits(make_vec({1000.0, 0.0}));
  CHECK(std::isfinite(extreme.log_prob(0)));
  CHECK(extreme.log_prob(0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(extreme.log_prob(1) <= 0.0);

  // Frozen from a 40-digit evaluation of log softmax([1,2,3])[2].
  Categorical d = Categorical::from_logits(make_vec({1.0, 2.0, 3.0}));
  CHECK(d.log_prob(2) == doctest::Approx(-0.40760596444438030448).epsilon(1e-12));

  CHECK_THROWS_AS(d.log_prob(3), InvalidArgument);
  CHECK_THROWS_AS(d.log_prob(-1), InvalidArgument);
}

TEST_CASE("log_prob stays finite up to logit magnitude 1e6") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Vec logits(4);
    for (Eigen::Index i = 0; i < 4; ++i) logits(i) = rng.uniform(-1e6, 1e6);
    Categorical d = Categorical::from_logits(logits);
    for (int a = 0; a < 4; ++a) {
      CHECK(std::isfinite(d.log_prob(a)) == (d.log_prob(a) <= 0.0));
      CHECK(d.log_prob(a) <= 0.0);
      CHECK(!std::isnan(d.log_prob(a)));
    }
  }
}

TEST_CASE("entropy: uniform, near-deterministic, direct-summation value") {
  Categorical uniform = Categorical::from_logits(Vec::Zero(4));
  CHECK(uniform.entropy() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Categorical sharp = Categorical::from_logits(make_vec({40.0, 0.0, 0.0}));
  CHECK(sharp.entropy() >= 0.0);
  CHECK(sharp.entropy() < 1e-10);

  // p = [0.2, 0.2, 0.6]; frozen direct summation: 0.9502705392332346.
  Categorical d = Categorical::from_logits(make_vec({0.0, 0.0, std::log(3.0)}));
  CHECK(d.entropy() == doctest::Approx(0.9502705392332346).epsilon(1e-10));
}

TEST_CASE("kl: identity, analytic limit, direct-summation value") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Vec logits(5);
    for (Eigen::Index i = 0; i < 5; ++i) logits(i) = rng.uniform(-10.0, 10.0);
    Categorical p = Categorical::from_logits(logits);
    CHECK(kl_divergence(p, p) >= 0.0);
    CHECK(kl_divergence(p, p) < 1e-12);
  }

  Categorical sharp = Categorical::from_logits(make_vec({40.0, 0.0, 0.0, 0.0}));
  Categorical uniform = Categorical::from_logits(Vec::Zero(4));
  CHECK(kl_divergence(sharp, uniform) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // KL([0.7, 0.3] || [0.5, 0.5]) frozen: 0.08228287850505185.
  Categorical p = Categorical::from_logits(make_vec({std::log(0.7), std::log(0.3)}));
  Categorical q = Categorical::from_logits(make_vec({std::log(0.5), std::log(0.5)}));
  CHECK(kl_divergence(p, q) == doctest::Approx(0.08228287850505185).epsilon(1e-10));

  Categorical r = Categorical::from_logits(Vec::Zero(3));
  CHECK_THROWS_AS(kl_divergence(p, r), InvalidArgument);
}

TEST_CASE("kl nonnegativity over random pairs") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    Vec lp(6), lq(6);
    for (Eigen::Index i = 0; i < 6; ++i) {
      lp(i) = rng.uniform(-8.0, 8.0);
      lq(i) = rng.uniform(-8.0, 8.0);
    }
    CHECK(kl_divergence(Categorical::from_logits(lp),
                        Categorical::from_logits(lq)) >= -1e-12);
  }
}

TEST_CASE("entropy(p) == ln|A| - kl(p, uniform)") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(10));
    Vec logits(n);
    for (Eigen::Index i = 0; i < n; ++i) logits(i) = rng.uniform(-12.0, 12.0);
    Categorical p = Categorical::from_logits(logits);
    Categorical uniform = Categorical::from_logits(Vec::Zero(n));
    CHECK(p.entropy() ==
          doctest::Approx(std::log(n) - kl_divergence(p, uniform)).epsilon(1e-9));
  }
}

TEST_CASE("sample: near-deterministic, determinism, frequencies") {
  Categorical sharp = Categorical::from_logits(make_vec({40.0, 0.0, 0.0}));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) CHECK(sample(sharp, rng) == 0);

  Rng ra(9), rb(9);
  Categorical u = Categorical::from_logits(Vec::Zero(4));
  for (int i = 0; i < 200; ++i) CHECK(sample(u, ra) == sample(u, rb));

  // Frequency oracle: uniform over 4, 100k draws, each within 0.25 +- 0.01.
  Rng rc(31);
  int counts[4] = {0, 0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample(u, rc)] += 1;
  for (int a = 0; a < 4; ++a) {
    const double freq = static_cast<double>(counts[a]) / n;
    CHECK(freq > 0.24);
    CHECK(freq < 0.26);
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  Categorical tie = Categorical::from_logits(make_vec({1.0, 1.0, 0.0}));
  CHECK(argmax_action(tie) == 0);
  Categorical high = Categorical::from_logits(make_vec({0.0, 2.0, 2.0}));
  CHECK(argmax_action(high) == 1);
}

TEST_CASE("entropy and kl gradients w.r.t. logits match finite differences") {
  // Direct FD on the logit vector (not through a net).
  Rng rng(41);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(6));
    Vec logits(n), target_logits(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      logits(i) = rng.uniform(-3.0, 3.0);
      target_logits(i) = rng.uniform(-3.0, 3.0);
    }
    const Mat lt = log_softmax_rows(target_logits.transpose());

    // KL metric gradient kernel.
    {
      MetricEval m = eval_kl_metric(log_softmax_rows(logits.transpose()), lt);
      for (Eigen::Index j = 0; j < n; ++j) {
        Vec up = logits, dn = logits;
        up(j) += h;
        dn(j) -= h;
        const double fd = (kl_rows(log_softmax_rows(up.transpose()), lt)(0) -
                           kl_rows(log_softmax_rows(dn.transpose()), lt)(0)) /
                          (2.0 * h);
        CHECK(oracle::rel_err(m.dlogits(0, j), fd, 1e-3) < 1e-4);
      }
    }
    // Entropy gradient via the uniform-target identity.
    {
      Categorical p = Categorical::from_logits(logits);
      const Mat lp = log_softmax_rows(logits.transpose());
      const Mat lu = Mat::Constant(1, n, -std::log(static_cast<double>(n)));
      MetricEval m = eval_kl_metric(lp, lu);  // dH/dz = -d(KL to uniform)/dz
      for (Eigen::Index j = 0; j < n; ++j) {
        Vec up = logits, dn = logits;
        up(j) += h;
        dn(j) -= h;
        const double fd = (Categorical::from_logits(up).entropy() -
                           Categorical::from_logits(dn).entropy()) /
                          (2.0 * h);
        CHECK(oracle::rel_err(-m.dlogits(0, j), fd, 1e-3) < 1e-4);
      }
    }
  }
}

TEST_CASE("shared trunk: value head reads the policy's last hidden layer") {
  const int hidden[] = {16, 8};
  ActorCritic shared = make_actor_critic(3, 5, hidden, true, 42);
  CHECK(shared.value.input_dim() == 8);
  CHECK(shared.value.output_dim() == 1);
  CHECK(shared.policy.output_dim() == 5);
  const Vec v = state_values(shared, Mat::Random(4, 3));
  CHECK(v.size() == 4);

  ActorCritic separate = make_actor_critic(3, 5, hidden, false, 42);
  CHECK(separate.value.input_dim() == 3);
  CHECK(separate.value.layer_sizes() == std::vector<int>({3, 16, 8, 1}));
}
