#include "mpac/rollout.hpp"

#include <cmath>

#include "doctest.h"
#include "mpac/errors.hpp"
#include "oracles.hpp"

using namespace mpac;

namespace {

ActorCritic small_ac(int obs_dim, int n_actions, std::uint64_t seed,
                     bool shared = false) {
  const int hidden[] = {12, 8};
  ActorCritic ac = make_actor_critic(obs_dim, n_actions, hidden, shared, seed);
  Rng rng(derive_seed(seed, 0x7E57));
  oracle::jitter(ac.policy, rng);
  oracle::jitter(ac.value, rng);
  return ac;
}

RolloutBatch chain_batch(const ActorCritic& ac, int n_envs, int n_steps,
                         std::uint64_t seed) {
  EnvPool pool = EnvPool::make("chain-8", n_envs, seed);
  Rng stream(derive_seed(seed, 0xC0));
  return collect(ac, pool, n_steps, stream);
}

}  // namespace

TEST_CASE("collect: batch shape and transition pass-through") {
  ActorCritic ac = small_ac(8, 2, 1);
  RolloutBatch batch = chain_batch(ac, 8, 4, 3);
  CHECK(batch.size() == 32);
  CHECK(batch.transitions.size() == 32);

  // Chain stepping is pure: replay each env segment against a fresh env.
  EnvPool pool = EnvPool::make("chain-8", 8, 3);
  for (int e = 0; e < 8; ++e) {
    auto env = make_env("chain-8");
    env->reset(0);
    env->load_state(pool.envs[e]->save_state());
    for (int t = 0; t < 4; ++t) {
      const Transition& tr = batch.at(e, t);
      StepResult sr = env->step(tr.action);
      CHECK(sr.reward == tr.reward);
      CHECK((sr.obs - tr.next_obs).isZero(0.0));
      CHECK(sr.done == tr.done);
    }
  }
}

TEST_CASE("collect: fixed seeds give bit-identical batches") {
  ActorCritic ac = small_ac(8, 2, 2);
  RolloutBatch a = chain_batch(ac, 4, 6, 11);
  RolloutBatch b = chain_batch(ac, 4, 6, 11);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.transitions[i].action == b.transitions[i].action);
    CHECK(a.transitions[i].reward == b.transitions[i].reward);
    CHECK(a.transitions[i].logp == b.transitions[i].logp);
    CHECK((a.transitions[i].obs - b.transitions[i].obs).isZero(0.0));
  }
}

TEST_CASE("collect: behavior log-probs are nonpositive and match the policy") {
  ActorCritic ac = small_ac(3, 9, 5);
  EnvPool pool = EnvPool::make("pendulum-disc9", 2, 7);
  Rng stream(1);
  RolloutBatch batch = collect(ac, pool, 10, stream);
  for (const auto& tr : batch.transitions) {
    CHECK(tr.logp <= 0.0);
    Categorical d = action_dist(ac, tr.obs);
    CHECK(tr.logp == doctest::Approx(d.log_prob(tr.action)).epsilon(1e-12));
  }
}

TEST_CASE("compute_returns: geometric recursion on a terminal segment") {
  // rewards [1,1,1], gamma 0.5, terminal -> returns [1.75, 1.5, 1.0].
  RolloutBatch batch;
  batch.n_envs = 1;
  batch.n_steps = 3;
  Vec obs = Vec::Zero(8);
  for (int t = 0; t < 3; ++t)
    batch.transitions.push_back({obs, 0, 1.0, obs, t == 2, -0.5});
  Vec rewards(3);
  rewards << 1.0, 1.0, 1.0;
  const Vec r = discounted_returns(batch, rewards, Vec::Constant(1, 99.0), 0.5);
  CHECK(r(0) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(r(1) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(r(2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("compute_returns: single-transition advantage is the Bellman residual") {
  ActorCritic ac = small_ac(8, 2, 9);
  // Zero both value nets so V == 0 everywhere: A = r.
  for (auto& l : ac.value.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  RolloutBatch batch;
  batch.n_envs = 1;
  batch.n_steps = 1;
  Vec obs = Vec::Zero(8);
  obs(0) = 1.0;
  batch.transitions.push_back({obs, 1, 1.0, obs, false, -0.5});
  compute_returns(batch, ac, 0.99);
  CHECK(batch.advantages(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(batch.has_advantages);
}

TEST_CASE("compute_returns matches brute force with mid-segment dones") {
  ActorCritic ac = small_ac(8, 2, 13);
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    RolloutBatch batch;
    batch.n_envs = 2;
    batch.n_steps = 6;
    std::vector<std::vector<double>> rewards(2);
    std::vector<std::vector<bool>> dones(2);
    for (int e = 0; e < 2; ++e) {
      for (int t = 0; t < 6; ++t) {
        Vec o(8), no(8);
        for (int i = 0; i < 8; ++i) {
          o(i) = rng.normal();
          no(i) = rng.normal();
        }
        const double r = rng.uniform(-2.0, 2.0);
        const bool done = rng.bernoulli(0.25);
        batch.transitions.push_back({o, 0, r, no, done, -0.1});
        rewards[e].push_back(r);
        dones[e].push_back(done);
      }
    }
    const double gamma = 0.9;
    compute_returns(batch, ac, gamma);
    for (int e = 0; e < 2; ++e)
      for (int t = 0; t < 6; ++t) {
        const double brute = oracle::brute_force_return(
            rewards[e], dones[e], t, batch.bootstrap_values(e), gamma);
        CHECK(std::abs(batch.returns(e * 6 + t) - brute) < 1e-10);
      }
  }
}

TEST_CASE("a2c_loss: null signal gives zero loss and zero gradients") {
  ActorCritic ac = small_ac(8, 2, 21);
  RolloutBatch batch = chain_batch(ac, 2, 4, 5);
  compute_returns(batch, ac, 0.99);
  // Force null signal: A = 0 and targets equal to predictions.
  batch.advantages.setZero();
  batch.returns = state_values(ac, batch.observations());
  A2cLoss loss = a2c_loss(batch, ac, 0.0, 0.5);
  CHECK(loss.total == doctest::Approx(0.0).epsilon(1e-15));
  for (const auto& l : loss.g_policy.layers) {
    CHECK(l.weight.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(l.bias.cwiseAbs().maxCoeff() < 1e-15);
  }
  for (const auto& l : loss.g_value.layers)
    CHECK(l.weight.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("a2c_loss: uniform policy single transition gives ln|A|") {
  const int sizes[] = {4, 4};
  ActorCritic ac;
  ac.policy = init_mlp(sizes, 0);
  for (auto& l : ac.policy.layers) l.weight.setZero();
  const int vsizes[] = {4, 1};
  ac.value = init_mlp(vsizes, 0);

  RolloutBatch batch;
  batch.n_envs = 1;
  batch.n_steps = 1;
  Vec obs = Vec::Zero(4);
  obs(0) = 1.0;
  batch.transitions.push_back({obs, 2, 0.0, obs, false, -std::log(4.0)});
  batch.returns = Vec::Zero(1);
  batch.advantages = Vec::Constant(1, 1.0);
  batch.bootstrap_values = Vec::Zero(1);
  batch.has_advantages = true;

  A2cLoss loss = a2c_loss(batch, ac, 0.0, 0.0);
  CHECK(loss.policy_term == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("a2c_loss gradients match finite differences") {
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL, 3ULL}) {
    const bool shared = seed == 3;  // exercise the shared trunk path once
    ActorCritic ac = small_ac(8, 2, seed, shared);
    RolloutBatch batch = chain_batch(ac, 2, 5, seed + 50);
    compute_returns(batch, ac, 0.95);
    const double beta = 0.07, vc = 0.4;
    A2cLoss loss = a2c_loss(batch, ac, beta, vc);

    // Advantages/returns are constants: freeze them before perturbing.
    const Vec adv = batch.advantages;
    const Vec ret = batch.returns;
    auto loss_of = [&](const ActorCritic& probe) {
      RolloutBatch copy = batch;
      copy.advantages = adv;
      copy.returns = ret;
      A2cLoss l = a2c_loss(copy, probe, beta, vc);
      return l.total;
    };

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < oracle::flat_count(ac.policy.layers); i += 3)
      idx.push_back(i);
    auto fd = oracle::fd_gradient(
        ac.policy,
        [&](const ParamSet& p) {
          ActorCritic probe = ac;
          probe.policy = p;
          return loss_of(probe);
        },
        idx);
    CHECK(oracle::max_rel_err_vs(loss.g_policy, idx, fd) < 1e-4);

    std::vector<std::size_t> vidx;
    for (std::size_t i = 0; i < oracle::flat_count(ac.value.layers); i += 2)
      vidx.push_back(i);
    auto vfd = oracle::fd_gradient(
        ac.value,
        [&](const ParamSet& p) {
          ActorCritic probe = ac;
          probe.value = p;
          return loss_of(probe);
        },
        vidx);
    CHECK(oracle::max_rel_err_vs(loss.g_value, vidx, vfd) < 1e-4);
  }
}

TEST_CASE("advantage detachment: value params do not leak into the policy term") {
  ActorCritic ac = small_ac(8, 2, 31);
  RolloutBatch batch = chain_batch(ac, 2, 5, 77);
  compute_returns(batch, ac, 0.99);

  // Same advantages, different value net: policy gradients identical.
  A2cLoss a = a2c_loss(batch, ac, 0.1, 0.5);
  ActorCritic perturbed = ac;
  Rng rng(1);
  oracle::jitter(perturbed.value, rng, 0.5);
  A2cLoss b = a2c_loss(batch, perturbed, 0.1, 0.5);
  for (std::size_t i = 0; i < a.g_policy.layers.size(); ++i) {
    CHECK((a.g_policy.layers[i].weight - b.g_policy.layers[i].weight)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((a.g_policy.layers[i].bias - b.g_policy.layers[i].bias)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("one policy step increases pi(right) under positive advantage") {
  ActorCritic ac = small_ac(8, 2, 41);
  RolloutBatch batch = chain_batch(ac, 4, 5, 19);
  compute_returns(batch, ac, 0.99);
  // Hand-set advantages: +1 when the sampled action was "right", -1 otherwise.
  for (int i = 0; i < batch.size(); ++i)
    batch.advantages(i) = batch.transitions[i].action == 1 ? 1.0 : -1.0;

  std::vector<double> before;
  for (const auto& tr : batch.transitions)
    before.push_back(action_dist(ac, tr.obs).probs()(1));

  A2cLoss loss = a2c_loss(batch, ac, 0.0, 0.0);
  OptimizerState opt = OptimizerState::sgd(0.05);
  apply_step(ac.policy, loss.g_policy, opt);

  for (int i = 0; i < batch.size(); ++i) {
    const double after = action_dist(ac, batch.transitions[i].obs).probs()(1);
    CHECK(after > before[i]);
  }
}

TEST_CASE("loss requires advantages; bad gamma rejected") {
  ActorCritic ac = small_ac(8, 2, 51);
  RolloutBatch batch = chain_batch(ac, 1, 3, 1);
  CHECK_THROWS_AS(a2c_loss(batch, ac, 0.1, 0.5), InvalidState);
  CHECK_THROWS_AS(compute_returns(batch, ac, 0.0), InvalidArgument);
  CHECK_THROWS_AS(compute_returns(batch, ac, 1.0), InvalidArgument);
}

TEST_CASE("a2c_loss flags non-finite losses as invalid state") {
  ActorCritic ac = small_ac(8, 2, 53);
  RolloutBatch batch = chain_batch(ac, 1, 3, 2);
  compute_returns(batch, ac, 0.99);
  batch.advantages(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(a2c_loss(batch, ac, 0.1, 0.5), InvalidState);
}
