#include "mpac/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mpac/errors.hpp"

namespace mpac {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double wrap_angle(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  if (w <= -kPi) w = kPi;  // convention: -pi maps to +pi
  return w;
}

namespace {

// Discretized pendulum swing-up. Angle is measured from upright;
// torque is one of 9 levels evenly spaced in [-2, 2].
//   thacc = (3g / 2l) sin(th) + (3 / m l^2) u,  g=10, m=1, l=1
// integrated semi-implicitly with dt=0.05; velocity clipped to [-8, 8].
// Reward is evaluated on the pre-step state with the applied torque:
//   r = -(th^2 + 0.1 thdot^2 + 0.001 u^2)
class PendulumEnv final : public Env {
 public:
  PendulumEnv() : id_("pendulum-disc9") {}

  const std::string& id() const override { return id_; }
  int obs_dim() const override { return 3; }
  int action_count() const override { return 9; }
  int horizon() const override { return 200; }

  Vec reset(std::uint64_t seed) override {
    rng_ = Rng(seed);
    return reset();
  }

  Vec reset() override {
    theta_ = kPi - rng_.uniform() * 2.0 * kPi;  // (-pi, pi]
    theta_dot_ = rng_.uniform(-1.0, 1.0);
    steps_ = 0;
    return observation();
  }

  StepResult step(int action) override {
    if (action < 0 || action >= action_count())
      throw InvalidArgument("pendulum: action index out of range");
    const double u = -2.0 + 0.5 * action;
    const double reward =
        -(theta_ * theta_ + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
    const double thacc = 15.0 * std::sin(theta_) + 3.0 * u;
    theta_dot_ = std::clamp(theta_dot_ + thacc * kDt, -8.0, 8.0);
    theta_ = wrap_angle(theta_ + theta_dot_ * kDt);
    steps_ += 1;
    return {observation(), reward, steps_ >= horizon()};
  }

  Vec observation() const override {
    Vec o(3);
    o << std::cos(theta_), std::sin(theta_), theta_dot_;
    return o;
  }

  std::string save_state() const override {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%a %a %d|", theta_, theta_dot_, steps_);
    return std::string(buf) + rng_.serialize();
  }

  void load_state(const std::string& state) override {
    auto sep = state.find('|');
    if (sep == std::string::npos) throw ParseError("bad pendulum state");
    if (std::sscanf(state.c_str(), "%la %la %d", &theta_, &theta_dot_, &steps_) != 3)
      throw ParseError("bad pendulum state");
    rng_.deserialize(state.substr(sep + 1));
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<PendulumEnv>(*this);
  }

 private:
  static constexpr double kDt = 0.05;
  std::string id_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
  Rng rng_;
};

// Diagnostic chain world: positions 0..n-1, start at 0; action 0 moves
// left, 1 moves right (both saturating). Reward 1 whenever the next
// position is the rightmost cell. Horizon 50.
class ChainEnv final : public Env {
 public:
  explicit ChainEnv(int n) : n_(n), id_("chain-" + std::to_string(n)) {}

  const std::string& id() const override { return id_; }
  int obs_dim() const override { return n_; }
  int action_count() const override { return 2; }
  int horizon() const override { return 50; }

  Vec reset(std::uint64_t seed) override {
    rng_ = Rng(seed);
    return reset();
  }

  Vec reset() override {
    pos_ = 0;
    steps_ = 0;
    return observation();
  }

  StepResult step(int action) override {
    if (action < 0 || action >= 2)
      throw InvalidArgument("chain: action index out of range");
    pos_ = action == 0 ? std::max(0, pos_ - 1) : std::min(n_ - 1, pos_ + 1);
    steps_ += 1;
    const double reward = pos_ == n_ - 1 ? 1.0 : 0.0;
    return {observation(), reward, steps_ >= horizon()};
  }

  Vec observation() const override {
    Vec o = Vec::Zero(n_);
    o(pos_) = 1.0;
    return o;
  }

  std::string save_state() const override {
    std::ostringstream os;
    os << pos_ << ' ' << steps_ << '|' << rng_.serialize();
    return os.str();
  }

  void load_state(const std::string& state) override {
    auto sep = state.find('|');
    if (sep == std::string::npos) throw ParseError("bad chain state");
    std::istringstream is(state.substr(0, sep));
    if (!(is >> pos_ >> steps_)) throw ParseError("bad chain state");
    rng_.deserialize(state.substr(sep + 1));
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<ChainEnv>(*this);
  }

 private:
  int n_;
  std::string id_;
  int pos_ = 0;
  int steps_ = 0;
  Rng rng_;
};

}  // namespace

std::unique_ptr<Env> make_env(std::string_view id) {
  if (id == "pendulum-disc9") return std::make_unique<PendulumEnv>();
  if (id.starts_with("chain-")) {
    int n = 0;
    try {
      n = std::stoi(std::string(id.substr(6)));
    } catch (const std::exception&) {
      throw InvalidArgument("unknown environment id '" + std::string(id) + "'");
    }
    if (n < 2 || n > 64)
      throw InvalidArgument("chain size must lie in [2, 64], got " +
                            std::to_string(n));
    return std::make_unique<ChainEnv>(n);
  }
  throw InvalidArgument("unknown environment id '" + std::string(id) + "'");
}

}  // namespace mpac
