#include "mpac/net.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "mpac/errors.hpp"
#include "mpac/serialize.hpp"
#include "oracles.hpp"

using namespace mpac;

namespace {

ParamSet hand_net(std::vector<Mat> weights, std::vector<Vec> biases) {
  ParamSet p;
  for (std::size_t i = 0; i < weights.size(); ++i)
    p.layers.push_back({weights[i], biases[i]});
  return p;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight != b.layers[i].weight) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("init_mlp shapes, zero biases, determinism") {
  const int sizes[] = {3, 2};
  ParamSet p = init_mlp(sizes, 0);
  REQUIRE(p.layers.size() == 1);
  CHECK(p.layers[0].weight.rows() == 2);
  CHECK(p.layers[0].weight.cols() == 3);
  CHECK(p.layers[0].bias.size() == 2);
  CHECK(p.layers[0].bias(0) == 0.0);
  CHECK(p.layers[0].bias(1) == 0.0);

  ParamSet q = init_mlp(sizes, 0);
  CHECK(bit_equal(p, q));
  ParamSet r = init_mlp(sizes, 1);
  CHECK_FALSE(bit_equal(p, r));
}

TEST_CASE("init_mlp rejects bad layer lists") {
  CHECK_THROWS_AS(init_mlp(std::vector<int>{}, 0), InvalidArgument);
  CHECK_THROWS_AS(init_mlp(std::vector<int>{4}, 0), InvalidArgument);
  CHECK_THROWS_AS(init_mlp(std::vector<int>{4, 0, 2}, 0), InvalidArgument);
}

TEST_CASE("init_mlp draws at scale 1/sqrt(fan_in)") {
  // Sample-statistics oracle over the drawn weights.
  const int sizes[] = {4, 512, 512, 5};
  ParamSet p = init_mlp(sizes, 7);
  for (const auto& layer : p.layers) {
    const double expect = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    const double mean = layer.weight.mean();
    const double var =
        (layer.weight.array() - mean).square().sum() / (layer.weight.size() - 1);
    const double sd = std::sqrt(var);
    CHECK(sd > 0.5 * expect);
    CHECK(sd < 2.0 * expect);
  }
}

TEST_CASE("forward: zero network maps anything to zero") {
  ParamSet p = hand_net({Mat::Zero(2, 3), Mat::Zero(4, 2)},
                        {Vec::Zero(2), Vec::Zero(4)});
  Vec x(3);
  x << 1.5, -2.0, 3.0;
  CHECK(forward(p, x).isZero(0.0));
}

TEST_CASE("forward: single affine layer") {
  Mat w(1, 1);
  w << 2.0;
  Vec b(1);
  b << 1.0;
  ParamSet p = hand_net({w}, {b});
  Vec x(1);
  x << 3.0;
  CHECK(forward(p, x)(0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("forward: two-layer net vs by-hand matrix evaluation") {
  Mat w1(2, 2), w2(1, 2);
  w1 << 1.0, -2.0, 0.5, 1.0;
  w2 << 3.0, -1.0;
  Vec b1(2), b2(1);
  b1 << 0.25, -0.5;
  b2 << 0.125;
  ParamSet p = hand_net({w1, w2}, {b1, b2});
  Vec x(2);
  x << 1.0, -1.0;
  // Manual: z1 = W1 x + b1 = [1+2+0.25, 0.5-1-0.5] = [3.25, -1.0]
  //         a1 = relu(z1) = [3.25, 0]
  //         y  = W2 a1 + b2 = 3*3.25 + 0.125 = 9.875
  CHECK(forward(p, x)(0) == doctest::Approx(9.875).epsilon(1e-15));
}

TEST_CASE("forward rejects dimension mismatch") {
  const int sizes[] = {3, 2};
  ParamSet p = init_mlp(sizes, 0);
  Vec x(4);
  x.setZero();
  CHECK_THROWS_AS(forward(p, x), InvalidArgument);
}

TEST_CASE("backward: zero output gradient gives zero parameter gradient") {
  const int sizes[] = {3, 8, 2};
  ParamSet p = init_mlp(sizes, 3);
  ForwardTape tape;
  Mat x(4, 3);
  x.setRandom();
  forward(p, x, &tape);
  GradSet g = backward(p, tape, Mat::Zero(4, 2));
  for (const auto& l : g.layers) {
    CHECK(l.weight.isZero(0.0));
    CHECK(l.bias.isZero(0.0));
  }
}

TEST_CASE("backward: scalar linear derivative") {
  Mat w(1, 1);
  w << 0.7;
  ParamSet p = hand_net({w}, {Vec::Zero(1)});
  ForwardTape tape;
  Vec x(1);
  x << 3.0;
  forward(p, x, &tape);
  GradSet g = backward(p, tape, Mat::Ones(1, 1));
  CHECK(g.layers[0].weight(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(g.layers[0].bias(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward matches finite differences on squared error") {
  // Deterministic seeds; relative error 1e-4 per the gradient contract.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, 0xF0));
    const int in = 2 + static_cast<int>(rng.below(4));
    const int h1 = 2 + static_cast<int>(rng.below(12));
    const int h2 = 2 + static_cast<int>(rng.below(12));
    const int out = 1 + static_cast<int>(rng.below(3));
    const std::vector<int> sizes = {in, h1, h2, out};
    ParamSet p = init_mlp(sizes, seed);
    oracle::jitter(p, rng);

    Mat x(3, in);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.normal();
    Mat target(3, out);
    for (Eigen::Index r = 0; r < target.rows(); ++r)
      for (Eigen::Index c = 0; c < target.cols(); ++c) target(r, c) = rng.normal();

    auto loss = [&](const ParamSet& ps) {
      return 0.5 * (forward(ps, x) - target).squaredNorm();
    };
    ForwardTape tape;
    const Mat y = forward(p, x, &tape);
    GradSet analytic = backward(p, tape, y - target);

    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < oracle::flat_count(p.layers); ++i) all.push_back(i);
    const auto fd = oracle::fd_gradient(p, loss, all);
    CHECK(oracle::max_rel_err_vs(analytic, all, fd) < 1e-4);
  }
}

TEST_CASE("backward is linear in the output gradient") {
  const int sizes[] = {3, 16, 4};
  ParamSet p = init_mlp(sizes, 11);
  ForwardTape tape;
  Mat x(5, 3);
  x.setRandom();
  forward(p, x, &tape);
  Mat u(5, 4), v(5, 4);
  u.setRandom();
  v.setRandom();
  const double a = 1.7, b = -0.3;
  GradSet combined = backward(p, tape, a * u + b * v);
  GradSet gu = backward(p, tape, u);
  GradSet gv = backward(p, tape, v);
  gu.scale(a);
  gu.add_scaled(gv, b);
  for (std::size_t i = 0; i < combined.layers.size(); ++i) {
    CHECK((combined.layers[i].weight - gu.layers[i].weight).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK((combined.layers[i].bias - gu.layers[i].bias).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("backward rejects a stale or mismatched tape") {
  const int sizes[] = {3, 8, 2};
  ParamSet p = init_mlp(sizes, 0);
  const int other_sizes[] = {3, 9, 2};
  ParamSet q = init_mlp(other_sizes, 0);
  ForwardTape tape;
  Mat x(4, 3);
  x.setRandom();
  forward(p, x, &tape);
  CHECK_THROWS_AS(backward(q, tape, Mat::Zero(4, 2)), InvalidState);
  CHECK_THROWS_AS(backward(p, tape, Mat::Zero(5, 2)), InvalidState);
}

TEST_CASE("apply_step: sgd arithmetic") {
  Mat w(1, 1);
  w << 1.0;
  ParamSet p = hand_net({w}, {Vec::Zero(1)});
  GradSet g = GradSet::zeros_like(p);
  g.layers[0].weight(0, 0) = 0.5;
  OptimizerState opt = OptimizerState::sgd(0.1);
  apply_step(p, g, opt);
  CHECK(p.layers[0].weight(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("apply_step: zero gradients leave adam parameters unchanged") {
  const int sizes[] = {2, 4, 2};
  ParamSet p = init_mlp(sizes, 5);
  ParamSet before = p;
  OptimizerState opt = OptimizerState::adam(p, 1e-3);
  apply_step(p, GradSet::zeros_like(p), opt);
  CHECK(bit_equal(p, before));
  CHECK(opt.step == 1);
  apply_step(p, GradSet::zeros_like(p), opt);
  CHECK(opt.step == 2);
}

TEST_CASE("apply_step: adam matches a hand-computed scalar recurrence") {
  Mat w(1, 1);
  w << 0.0;
  ParamSet p = hand_net({w}, {Vec::Zero(1)});
  OptimizerState opt = OptimizerState::adam(p, 0.1);
  GradSet g = GradSet::zeros_like(p);
  g.layers[0].weight(0, 0) = 1.0;

  // Independent recurrence with the same constants.
  double m = 0.0, v = 0.0, param = 0.0;
  for (int t = 1; t <= 3; ++t) {
    apply_step(p, g, opt);
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    param -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(param).epsilon(1e-12));
  }
}

TEST_CASE("apply_step rejects non-finite gradients without touching params") {
  const int sizes[] = {2, 2};
  ParamSet p = init_mlp(sizes, 9);
  ParamSet before = p;
  OptimizerState opt = OptimizerState::sgd(0.1);
  GradSet g = GradSet::zeros_like(p);
  g.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(apply_step(p, g, opt), NumericError);
  CHECK(bit_equal(p, before));
  g.layers[0].weight(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(apply_step(p, g, opt), NumericError);
  CHECK(bit_equal(p, before));
}

TEST_CASE("dropout: inverted scaling and training-only masks") {
  const int sizes[] = {4, 64, 64, 2};
  ParamSet p = init_mlp(sizes, 21);
  Mat x(8, 4);
  x.setRandom();

  // No rng: dropout inactive even with a rate.
  const Mat plain = forward(p, x);
  CHECK((forward(p, x, nullptr, DropoutSpec{0.2}, nullptr) - plain).isZero(0.0));

  // Deterministic given the stream state.
  Rng r1(42), r2(42);
  ForwardTape t1, t2;
  const Mat y1 = forward(p, x, &t1, DropoutSpec{0.2}, &r1);
  const Mat y2 = forward(p, x, &t2, DropoutSpec{0.2}, &r2);
  CHECK((y1 - y2).isZero(0.0));
  REQUIRE(t1.mask.size() == 2);

  // Masks hold 0 or 1/keep, with roughly rate zeros.
  double zeros = 0.0, total = 0.0;
  for (const auto& m : t1.mask) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double val = m(i / m.cols(), i % m.cols());
      CHECK((val == 0.0 || val == doctest::Approx(1.0 / 0.8).epsilon(1e-12)));
      zeros += val == 0.0 ? 1.0 : 0.0;
      total += 1.0;
    }
  }
  CHECK(zeros / total == doctest::Approx(0.2).epsilon(0.5));
}

TEST_CASE("paramset serialization round-trips bit-exactly") {
  const int sizes[] = {3, 32, 9};
  ParamSet p = init_mlp(sizes, 1234);
  p.layers[0].weight(0, 0) = 0x1.fffffffffffffp-1;  // awkward bit patterns
  p.layers[0].bias(0) = -0.0;

  const std::string path = (std::filesystem::temp_directory_path() /
                            "mpac_test_params.bin").string();
  save_params(p, path);
  ParamSet q = load_params(path);
  CHECK(bit_equal(p, q));
  CHECK(q.seed == p.seed);

  // Two saves of the same set are byte-identical.
  std::ostringstream s1, s2;
  Container c1, c2;
  paramset_to_container(p, "net.", c1);
  paramset_to_container(q, "net.", c2);
  save_container(c1, s1);
  save_container(c2, s2);
  CHECK(s1.str() == s2.str());
  std::filesystem::remove(path);
}
