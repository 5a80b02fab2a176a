#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mpac/env.hpp"
#include "mpac/policy.hpp"

namespace mpac {

struct DemoPair {
  Vec obs;
  int action;
};

// Ordered (observation, action) pairs grouped into episodes, plus
// metadata identifying the environment and the generator.
struct DemonstrationSet {
  std::vector<std::vector<DemoPair>> episodes;
  std::string env_id;
  std::string generator;

  std::size_t pair_count() const;
  int obs_dim() const;  // throws on an empty set
  Mat obs_matrix() const;
  std::vector<int> all_actions() const;
};

struct RecordStats {
  int completed_episodes = 0;
  double mean_return = 0.0;  // undiscounted, over completed episodes
};

// Deterministic controller (no randomness of its own).
using ScriptedPolicy = std::function<int(const Vec& obs)>;

// Roll episodes until n_transitions pairs are stored. greedy takes
// argmax actions (ties -> lowest index); otherwise actions are sampled.
DemonstrationSet record(const ActorCritic& ac, Env& env, std::size_t n_transitions,
                        std::uint64_t seed, bool greedy,
                        RecordStats* stats = nullptr);

DemonstrationSet record_scripted(const ScriptedPolicy& policy, Env& env,
                                 std::size_t n_transitions, std::uint64_t seed,
                                 RecordStats* stats = nullptr);

// Line-delimited text file: a version+env header, then one line per
// pair (episode, step, observation as hex floats, action). Two saves
// of the same set are byte-identical; load(save(x)) == x exactly.
void save_demos(const DemonstrationSet& set, const std::string& path);
DemonstrationSet load_demos(const std::string& path);

// Supervised maximum-likelihood fit of a categorical policy to the
// demonstrated pairs; dropout active during training only. epochs == 0
// returns the freshly initialized net.
ParamSet behavior_clone(const DemonstrationSet& set, std::span<const int> layer_sizes,
                        int epochs, int batch_size, double dropout_rate,
                        std::uint64_t seed, double lr);

// Built-in demonstration generators: "pendulum-energy" (energy swing-up
// with a stabilizing controller near upright) and "chain-right".
ScriptedPolicy scripted_policy(std::string_view script_id, const Env& env);

}  // namespace mpac
