#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mpac/demos.hpp"
#include "mpac/lagrange.hpp"

namespace mpac {

// Full description of one training run. Defaults are the pendulum
// configuration (policy/multiplier step sizes 1e-4, entropy factor 0.1,
// 8 parallel envs, 1000-step epochs, 100 epochs, 10 eval episodes).
struct RunConfig {
  std::string env_id = "pendulum-disc9";
  std::string algorithm = "mpac";  // "mpac" or "a2c"
  std::uint64_t seed = 0;
  int epochs = 100;
  int steps_per_epoch = 1000;  // total environment steps per epoch
  int parallel_envs = 8;
  int n_steps = 5;
  double gamma = 0.99;
  double policy_lr = 1e-4;
  double lambda_lr = 1e-4;
  double beta = 0.1;
  double value_coef = 0.5;
  std::vector<int> hidden = {512, 512};
  bool shared_trunk = false;
  std::vector<PreferenceSpec> preferences;
  int eval_episodes = 10;
  bool greedy_eval = false;
  std::string out_dir = "mpac-run";
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::string resume_from;   // optional checkpoint to continue
};

// Default threshold l_k per preference kind (entropy 2.0, conserve
// 0.03, reference 0.1, gail 0.1).
double default_threshold(PrefKind k);

// Parse + validate. Missing fields take defaults; unknown fields and
// invariant violations raise ConfigError naming the field. The
// MPAC_OUT_DIR environment variable overrides out_dir when set.
RunConfig parse_config_text(const std::string& json_text);
RunConfig parse_config_file(const std::string& path);

// Canonical JSON for a config; operational fields (out_dir,
// resume_from) are excluded so resumed runs compare equal.
std::string config_signature(const RunConfig& cfg);
// Full JSON round-trip of a config, including operational fields.
std::string config_to_json_text(const RunConfig& cfg);

struct EvalStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Runs full episodes on a distinct evaluation seed stream; actions are
// sampled unless greedy is set. Returns undiscounted return stats.
EvalStats evaluate(const ActorCritic& ac, Env& env, int episodes,
                   std::uint64_t seed, bool greedy = false);
EvalStats evaluate_policy(const ParamSet& policy, Env& env, int episodes,
                          std::uint64_t seed, bool greedy = false);

struct MetricsRow {
  int epoch = 0;
  std::uint64_t env_steps = 0;
  double eval_mean = 0.0, eval_min = 0.0, eval_max = 0.0;
  double policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
  std::vector<double> mean_d;  // aligned with cfg.preferences
  std::vector<double> lambda;
};

std::string metrics_header(const RunConfig& cfg);
std::string metrics_line(const MetricsRow& row);

struct TrainResult {
  ActorCritic ac;
  std::vector<MetricsRow> rows;
  std::string metrics_path;
  std::string checkpoint_path;
  std::uint64_t env_steps = 0;
  bool aborted = false;
  std::string abort_reason;
};

using EpochCallback = std::function<void(const MetricsRow&)>;

// The training loop. Per epoch: one discriminator step (if GAIL is
// active, from the previous epoch's agent sample), then successive
// n-step minibatches each doing collect / returns / gail advantages +
// V_gail step / one policy+value optimizer step / polyak update, then
// one multiplier step from the epoch-mean d_k, then evaluation and one
// metrics row. A non-finite loss aborts with the last good checkpoint.
TrainResult train(const RunConfig& cfg, const EpochCallback& cb = {});

}  // namespace mpac
