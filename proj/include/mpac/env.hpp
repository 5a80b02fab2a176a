#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "mpac/net.hpp"
#include "mpac/rng.hpp"

namespace mpac {

struct StepResult {
  Vec obs;        // next observation
  double reward;
  bool done;      // true iff the step counter reached the horizon
};

// Deterministic, seedable episodic environment. Episodes never
// terminate early: done is raised exactly at the horizon.
class Env {
 public:
  virtual ~Env() = default;

  virtual const std::string& id() const = 0;
  virtual int obs_dim() const = 0;
  virtual int action_count() const = 0;
  virtual int horizon() const = 0;

  // Reseed the stream, then start a fresh episode.
  virtual Vec reset(std::uint64_t seed) = 0;
  // Start a fresh episode continuing the current stream.
  virtual Vec reset() = 0;

  virtual StepResult step(int action) = 0;

  virtual Vec observation() const = 0;

  // Opaque text state (dynamics state + rng), for checkpoints.
  virtual std::string save_state() const = 0;
  virtual void load_state(const std::string& state) = 0;

  virtual std::unique_ptr<Env> clone() const = 0;
};

// Known ids: "pendulum-disc9" and "chain-N" for N in [2, 64].
std::unique_ptr<Env> make_env(std::string_view id);

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

}  // namespace mpac
