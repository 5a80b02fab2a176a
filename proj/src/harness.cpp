#include "mpac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mpac/errors.hpp"
#include "mpac/serialize.hpp"

namespace mpac {

using nlohmann::json;

double default_threshold(PrefKind k) {
  switch (k) {
    case PrefKind::Entropy: return 2.0;
    case PrefKind::Conserve: return 0.03;
    case PrefKind::Reference: return 0.1;
    case PrefKind::Gail: return 0.1;
  }
  return 0.0;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.algorithm != "mpac" && cfg.algorithm != "a2c")
    fail("algorithm: expected 'mpac' or 'a2c', got '" + cfg.algorithm + "'");
  make_env(cfg.env_id);  // throws InvalidArgument on unknown ids
  if (cfg.epochs < 1) fail("epochs: must be >= 1");
  if (cfg.steps_per_epoch < 1) fail("steps_per_epoch: must be >= 1");
  if (cfg.parallel_envs < 1) fail("parallel_envs: must be >= 1");
  if (cfg.n_steps < 1) fail("n_steps: must be >= 1");
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) fail("gamma: must lie in (0, 1)");
  if (cfg.policy_lr <= 0.0) fail("policy_lr: must be > 0");
  if (cfg.lambda_lr <= 0.0) fail("lambda_lr: must be > 0");
  if (cfg.beta < 0.0) fail("beta: must be >= 0");
  if (cfg.value_coef < 0.0) fail("value_coef: must be >= 0");
  for (int h : cfg.hidden)
    if (h < 1) fail("hidden: layer sizes must be >= 1");
  if (cfg.shared_trunk && cfg.hidden.empty())
    fail("shared_trunk: requires at least one hidden layer");
  if (cfg.eval_episodes < 1) fail("eval_episodes: must be >= 1");
  if (cfg.checkpoint_every < 0) fail("checkpoint_every: must be >= 0");
  if (cfg.algorithm == "a2c" && !cfg.preferences.empty())
    fail("preferences: algorithm 'a2c' does not take preferences");
  std::vector<bool> seen(4, false);
  for (const auto& p : cfg.preferences) {
    const std::string name = pref_kind_name(p.kind);
    if (seen[static_cast<int>(p.kind)]) fail("preferences: duplicate '" + name + "'");
    seen[static_cast<int>(p.kind)] = true;
    if (p.threshold < 0.0) fail(name + ".threshold: must be >= 0");
    if (p.kind == PrefKind::Conserve && !(p.eta > 0.0 && p.eta < 1.0))
      fail("conserve.eta: must lie in (0, 1)");
    if ((p.kind == PrefKind::Reference || p.kind == PrefKind::Gail) &&
        p.demo_path.empty())
      fail(name + ".demo_path: required for the " + name + " preference");
    if (p.kind == PrefKind::Reference) {
      if (p.bc_epochs < 0) fail("reference.bc_epochs: must be >= 0");
      if (p.bc_batch < 1) fail("reference.bc_batch: must be >= 1");
      if (p.bc_lr <= 0.0) fail("reference.bc_lr: must be > 0");
      if (p.bc_dropout < 0.0 || p.bc_dropout >= 1.0)
        fail("reference.bc_dropout: must lie in [0, 1)");
    }
    if (p.kind == PrefKind::Gail) {
      if (p.disc_lr <= 0.0) fail("gail.disc_lr: must be > 0");
      if (p.gail_value_lr <= 0.0) fail("gail.value_lr: must be > 0");
      if (p.disc_batch < 1) fail("gail.disc_batch: must be >= 1");
    }
  }
}

PreferenceSpec pref_from_json(const json& jp) {
  if (!jp.is_object()) throw ConfigError("preferences: entries must be objects");
  if (!jp.contains("kind")) throw ConfigError("preferences: missing 'kind'");
  const std::string kind_name = jp.at("kind").get<std::string>();
  const auto kind = pref_kind_from_name(kind_name);
  if (!kind) throw ConfigError("preferences: unknown kind '" + kind_name + "'");
  PreferenceSpec p;
  p.kind = *kind;
  p.threshold = default_threshold(*kind);
  for (const auto& [key, value] : jp.items()) {
    if (key == "kind") continue;
    if (key == "threshold") p.threshold = value.get<double>();
    else if (key == "eta" && *kind == PrefKind::Conserve) p.eta = value.get<double>();
    else if (key == "demo_path" &&
             (*kind == PrefKind::Reference || *kind == PrefKind::Gail))
      p.demo_path = value.get<std::string>();
    else if (key == "bc_epochs" && *kind == PrefKind::Reference)
      p.bc_epochs = value.get<int>();
    else if (key == "bc_batch" && *kind == PrefKind::Reference)
      p.bc_batch = value.get<int>();
    else if (key == "bc_lr" && *kind == PrefKind::Reference)
      p.bc_lr = value.get<double>();
    else if (key == "bc_dropout" && *kind == PrefKind::Reference)
      p.bc_dropout = value.get<double>();
    else if (key == "disc_lr" && *kind == PrefKind::Gail)
      p.disc_lr = value.get<double>();
    else if (key == "value_lr" && *kind == PrefKind::Gail)
      p.gail_value_lr = value.get<double>();
    else if (key == "disc_batch" && *kind == PrefKind::Gail)
      p.disc_batch = value.get<int>();
    else
      throw ConfigError("preferences: unknown field '" + key + "' for kind '" +
                        kind_name + "'");
  }
  return p;
}

json pref_to_json(const PreferenceSpec& p) {
  json jp;
  jp["kind"] = pref_kind_name(p.kind);
  jp["threshold"] = p.threshold;
  if (p.kind == PrefKind::Conserve) jp["eta"] = p.eta;
  if (p.kind == PrefKind::Reference) {
    jp["demo_path"] = p.demo_path;
    jp["bc_epochs"] = p.bc_epochs;
    jp["bc_batch"] = p.bc_batch;
    jp["bc_lr"] = p.bc_lr;
    jp["bc_dropout"] = p.bc_dropout;
  }
  if (p.kind == PrefKind::Gail) {
    jp["demo_path"] = p.demo_path;
    jp["disc_lr"] = p.disc_lr;
    jp["value_lr"] = p.gail_value_lr;
    jp["disc_batch"] = p.disc_batch;
  }
  return jp;
}

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "env") cfg.env_id = value.get<std::string>();
      else if (key == "algorithm") cfg.algorithm = value.get<std::string>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "steps_per_epoch") cfg.steps_per_epoch = value.get<int>();
      else if (key == "parallel_envs") cfg.parallel_envs = value.get<int>();
      else if (key == "n_steps") cfg.n_steps = value.get<int>();
      else if (key == "gamma") cfg.gamma = value.get<double>();
      else if (key == "policy_lr") cfg.policy_lr = value.get<double>();
      else if (key == "lambda_lr") cfg.lambda_lr = value.get<double>();
      else if (key == "beta") cfg.beta = value.get<double>();
      else if (key == "value_coef") cfg.value_coef = value.get<double>();
      else if (key == "hidden") cfg.hidden = value.get<std::vector<int>>();
      else if (key == "shared_trunk") cfg.shared_trunk = value.get<bool>();
      else if (key == "eval_episodes") cfg.eval_episodes = value.get<int>();
      else if (key == "greedy_eval") cfg.greedy_eval = value.get<bool>();
      else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
      else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<int>();
      else if (key == "resume_from") cfg.resume_from = value.get<std::string>();
      else if (key == "preferences") {
        if (!value.is_array()) throw ConfigError("preferences: must be an array");
        for (const auto& jp : value) cfg.preferences.push_back(pref_from_json(jp));
      } else {
        throw ConfigError("unknown config field '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("config field '" + key + "': " + e.what());
    }
  }
  if (const char* env_out = std::getenv("MPAC_OUT_DIR"); env_out && *env_out)
    cfg.out_dir = env_out;
  validate_config(cfg);
  return cfg;
}

json config_to_json_impl(const RunConfig& cfg, bool operational) {
  json doc;
  doc["env"] = cfg.env_id;
  doc["algorithm"] = cfg.algorithm;
  doc["seed"] = cfg.seed;
  doc["epochs"] = cfg.epochs;
  doc["steps_per_epoch"] = cfg.steps_per_epoch;
  doc["parallel_envs"] = cfg.parallel_envs;
  doc["n_steps"] = cfg.n_steps;
  doc["gamma"] = cfg.gamma;
  doc["policy_lr"] = cfg.policy_lr;
  doc["lambda_lr"] = cfg.lambda_lr;
  doc["beta"] = cfg.beta;
  doc["value_coef"] = cfg.value_coef;
  doc["hidden"] = cfg.hidden;
  doc["shared_trunk"] = cfg.shared_trunk;
  doc["eval_episodes"] = cfg.eval_episodes;
  doc["greedy_eval"] = cfg.greedy_eval;
  doc["checkpoint_every"] = cfg.checkpoint_every;
  json prefs = json::array();
  for (const auto& p : cfg.preferences) prefs.push_back(pref_to_json(p));
  doc["preferences"] = prefs;
  if (operational) {
    doc["out_dir"] = cfg.out_dir;
    doc["resume_from"] = cfg.resume_from;
  }
  return doc;
}

}  // namespace

RunConfig parse_config_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return config_from_json(doc);
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_signature(const RunConfig& cfg) {
  return config_to_json_impl(cfg, false).dump();
}

std::string config_to_json_text(const RunConfig& cfg) {
  return config_to_json_impl(cfg, true).dump(2);
}

EvalStats evaluate_policy(const ParamSet& policy, Env& env, int episodes,
                          std::uint64_t seed, bool greedy) {
  if (episodes < 1) throw InvalidArgument("evaluate: episodes must be >= 1");
  Rng stream(derive_seed(seed, 0x5A));
  EvalStats stats;
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(derive_seed(seed, 0xE7, static_cast<std::uint64_t>(ep)));
    double total = 0.0;
    while (true) {
      Categorical dist = Categorical::from_logits(forward(policy, obs));
      const int action = greedy ? argmax_action(dist) : sample(dist, stream);
      StepResult sr = env.step(action);
      total += sr.reward;
      obs = sr.obs;
      if (sr.done) break;
    }
    sum += total;
    stats.min = std::min(stats.min, total);
    stats.max = std::max(stats.max, total);
  }
  stats.mean = sum / episodes;
  return stats;
}

EvalStats evaluate(const ActorCritic& ac, Env& env, int episodes,
                   std::uint64_t seed, bool greedy) {
  return evaluate_policy(ac.policy, env, episodes, seed, greedy);
}

std::string metrics_header(const RunConfig& cfg) {
  std::string h =
      "epoch,env_steps,eval_mean,eval_min,eval_max,policy_loss,value_loss,entropy";
  for (const auto& p : cfg.preferences) {
    h += std::string(",d_") + pref_kind_name(p.kind);
    h += std::string(",lambda_") + pref_kind_name(p.kind);
  }
  return h;
}

std::string metrics_line(const MetricsRow& row) {
  std::string s = std::to_string(row.epoch) + "," + std::to_string(row.env_steps);
  s += "," + fmt17(row.eval_mean) + "," + fmt17(row.eval_min) + "," +
       fmt17(row.eval_max);
  s += "," + fmt17(row.policy_loss) + "," + fmt17(row.value_loss) + "," +
       fmt17(row.entropy);
  for (std::size_t k = 0; k < row.mean_d.size(); ++k)
    s += "," + fmt17(row.mean_d[k]) + "," + fmt17(row.lambda[k]);
  return s;
}

namespace {

struct TrainState {
  ActorCritic ac;
  OptimizerState opt_policy;
  OptimizerState opt_value;
  std::vector<ActivePreference> prefs;
  LagrangeState lam;
  EnvPool pool;
  Rng collect_stream;
  Rng gail_demo_stream;
  Mat demo_sa;  // expert (s,a) rows for the discriminator
  Mat agent_obs_buffer;
  std::vector<int> agent_action_buffer;
  int epochs_done = 0;
  std::uint64_t env_steps = 0;
};

DemonstrationSet load_demos_checked(const RunConfig& cfg, const PreferenceSpec& p) {
  DemonstrationSet demos = load_demos(p.demo_path);
  if (demos.env_id != cfg.env_id)
    throw ConfigError(std::string(pref_kind_name(p.kind)) + ".demo_path: '" +
                      p.demo_path + "' was recorded on '" + demos.env_id +
                      "' but the run uses '" + cfg.env_id + "'");
  return demos;
}

TrainState init_state(const RunConfig& cfg) {
  TrainState st;
  const auto probe = make_env(cfg.env_id);
  const int obs_dim = probe->obs_dim();
  const int n_actions = probe->action_count();

  st.ac = make_actor_critic(obs_dim, n_actions, cfg.hidden, cfg.shared_trunk,
                            derive_seed(cfg.seed, 0xA0));
  st.opt_policy = OptimizerState::adam(st.ac.policy, cfg.policy_lr);
  st.opt_value = OptimizerState::adam(st.ac.value, cfg.policy_lr);
  st.pool = EnvPool::make(cfg.env_id, cfg.parallel_envs, cfg.seed);
  st.collect_stream = Rng(derive_seed(cfg.seed, 0xC0));
  st.gail_demo_stream = Rng(derive_seed(cfg.seed, 0xDD));

  for (const auto& spec : cfg.preferences) {
    ActivePreference ap;
    ap.spec = spec;
    switch (spec.kind) {
      case PrefKind::Entropy:
        break;
      case PrefKind::Conserve:
        ap.target = st.ac.policy;
        break;
      case PrefKind::Reference: {
        const DemonstrationSet demos = load_demos_checked(cfg, spec);
        std::vector<int> sizes;
        sizes.push_back(obs_dim);
        sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        sizes.push_back(n_actions);
        ap.target = behavior_clone(demos, sizes, spec.bc_epochs, spec.bc_batch,
                                   spec.bc_dropout, derive_seed(cfg.seed, 0xB0),
                                   spec.bc_lr);
        break;
      }
      case PrefKind::Gail: {
        const DemonstrationSet demos = load_demos_checked(cfg, spec);
        ap.gail = std::make_shared<GailSubsystem>(
            make_gail(obs_dim, n_actions, cfg.hidden, spec.disc_lr,
                      spec.gail_value_lr, derive_seed(cfg.seed, 0xDA)));
        st.demo_sa = state_action_matrix(demos.obs_matrix(), demos.all_actions(),
                                         n_actions);
        break;
      }
    }
    st.prefs.push_back(std::move(ap));
  }
  st.lam = LagrangeState::init(cfg.preferences, cfg.lambda_lr);
  return st;
}

Container state_to_container(const RunConfig& cfg, const TrainState& st) {
  Container c;
  c["format"] = std::string("mpac-checkpoint-v1");
  c["config"] = config_signature(cfg);
  c["env"] = cfg.env_id;
  c["epoch"] = static_cast<std::uint64_t>(st.epochs_done);
  c["env_steps"] = st.env_steps;
  c["shared_trunk"] = static_cast<std::uint64_t>(cfg.shared_trunk ? 1 : 0);
  paramset_to_container(st.ac.policy, "policy.", c);
  paramset_to_container(st.ac.value, "value.", c);
  optimizer_to_container(st.opt_policy, "opt_policy.", c);
  optimizer_to_container(st.opt_value, "opt_value.", c);

  ArrayEntry lam;
  lam.shape = {static_cast<std::uint32_t>(st.lam.lambda.size())};
  lam.data.assign(st.lam.lambda.data(), st.lam.lambda.data() + st.lam.lambda.size());
  c["lambda"] = std::move(lam);

  for (std::size_t k = 0; k < st.prefs.size(); ++k) {
    const auto& ap = st.prefs[k];
    const std::string base = "pref" + std::to_string(k) + ".";
    c[base + "kind"] = std::string(pref_kind_name(ap.spec.kind));
    if (ap.spec.kind == PrefKind::Conserve || ap.spec.kind == PrefKind::Reference)
      paramset_to_container(ap.target, base + "target.", c);
    if (ap.spec.kind == PrefKind::Gail) {
      paramset_to_container(ap.gail->disc, base + "gail.disc.", c);
      paramset_to_container(ap.gail->value, base + "gail.value.", c);
      optimizer_to_container(ap.gail->disc_opt, base + "gail.opt_disc.", c);
      optimizer_to_container(ap.gail->value_opt, base + "gail.opt_value.", c);
    }
  }

  c["rng.collect"] = st.collect_stream.serialize();
  c["rng.gail_demo"] = st.gail_demo_stream.serialize();
  for (int i = 0; i < st.pool.size(); ++i)
    c["env" + std::to_string(i) + ".state"] = st.pool.envs[i]->save_state();

  if (st.agent_obs_buffer.rows() > 0) {
    ArrayEntry obs;
    obs.shape = {static_cast<std::uint32_t>(st.agent_obs_buffer.rows()),
                 static_cast<std::uint32_t>(st.agent_obs_buffer.cols())};
    for (Eigen::Index r = 0; r < st.agent_obs_buffer.rows(); ++r)
      for (Eigen::Index cc = 0; cc < st.agent_obs_buffer.cols(); ++cc)
        obs.data.push_back(st.agent_obs_buffer(r, cc));
    c["gail_buffer.obs"] = std::move(obs);
    ArrayEntry act;
    act.shape = {static_cast<std::uint32_t>(st.agent_action_buffer.size())};
    for (int a : st.agent_action_buffer) act.data.push_back(a);
    c["gail_buffer.actions"] = std::move(act);
  }
  return c;
}

TrainState state_from_container(const RunConfig& cfg, const Container& c) {
  const auto* fmt = std::get_if<std::string>(&c.at("format"));
  if (!fmt || *fmt != "mpac-checkpoint-v1")
    throw ParseError("not an mpac checkpoint");
  const auto* sig = std::get_if<std::string>(&c.at("config"));
  if (!sig || *sig != config_signature(cfg))
    throw ConfigError("resume_from: checkpoint was produced by a different config");

  TrainState st;
  st.ac.policy = paramset_from_container(c, "policy.");
  st.ac.value = paramset_from_container(c, "value.");
  st.ac.shared_trunk = cfg.shared_trunk;
  st.opt_policy = optimizer_from_container(c, "opt_policy.");
  st.opt_value = optimizer_from_container(c, "opt_value.");
  st.epochs_done = static_cast<int>(std::get<std::uint64_t>(c.at("epoch")));
  st.env_steps = std::get<std::uint64_t>(c.at("env_steps"));

  const auto probe = make_env(cfg.env_id);
  const int n_actions = probe->action_count();
  for (std::size_t k = 0; k < cfg.preferences.size(); ++k) {
    const auto& spec = cfg.preferences[k];
    const std::string base = "pref" + std::to_string(k) + ".";
    ActivePreference ap;
    ap.spec = spec;
    if (spec.kind == PrefKind::Conserve || spec.kind == PrefKind::Reference)
      ap.target = paramset_from_container(c, base + "target.");
    if (spec.kind == PrefKind::Gail) {
      ap.gail = std::make_shared<GailSubsystem>();
      ap.gail->disc = paramset_from_container(c, base + "gail.disc.");
      ap.gail->value = paramset_from_container(c, base + "gail.value.");
      ap.gail->disc_opt = optimizer_from_container(c, base + "gail.opt_disc.");
      ap.gail->value_opt = optimizer_from_container(c, base + "gail.opt_value.");
      ap.gail->action_count = n_actions;
      const DemonstrationSet demos = load_demos_checked(cfg, spec);
      st.demo_sa = state_action_matrix(demos.obs_matrix(), demos.all_actions(),
                                       n_actions);
    }
    st.prefs.push_back(std::move(ap));
  }

  st.lam = LagrangeState::init(cfg.preferences, cfg.lambda_lr);
  const auto* lam = std::get_if<ArrayEntry>(&c.at("lambda"));
  if (!lam || lam->data.size() != cfg.preferences.size())
    throw ParseError("checkpoint lambda entry does not match preferences");
  for (std::size_t k = 0; k < lam->data.size(); ++k)
    st.lam.lambda(static_cast<Eigen::Index>(k)) = lam->data[k];

  st.collect_stream.deserialize(std::get<std::string>(c.at("rng.collect")));
  st.gail_demo_stream.deserialize(std::get<std::string>(c.at("rng.gail_demo")));

  for (int i = 0; i < cfg.parallel_envs; ++i) {
    auto env = make_env(cfg.env_id);
    env->load_state(std::get<std::string>(c.at("env" + std::to_string(i) + ".state")));
    st.pool.obs.push_back(env->observation());
    st.pool.envs.push_back(std::move(env));
  }

  if (auto it = c.find("gail_buffer.obs"); it != c.end()) {
    const auto& obs = std::get<ArrayEntry>(it->second);
    st.agent_obs_buffer.resize(obs.shape[0], obs.shape[1]);
    std::size_t idx = 0;
    for (std::uint32_t r = 0; r < obs.shape[0]; ++r)
      for (std::uint32_t cc = 0; cc < obs.shape[1]; ++cc)
        st.agent_obs_buffer(r, cc) = obs.data[idx++];
    const auto& act = std::get<ArrayEntry>(c.at("gail_buffer.actions"));
    for (double a : act.data)
      st.agent_action_buffer.push_back(static_cast<int>(a));
  }
  return st;
}

// Deterministic expert minibatch, sampled with replacement.
Mat sample_demo_batch(const Mat& demo_sa, int batch, Rng& stream) {
  const int n = static_cast<int>(demo_sa.rows());
  const int b = std::min(batch, n);
  Mat out(b, demo_sa.cols());
  for (int i = 0; i < b; ++i)
    out.row(i) = demo_sa.row(static_cast<Eigen::Index>(
        stream.below(static_cast<std::uint64_t>(n))));
  return out;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const EpochCallback& cb) {
  validate_config(cfg);
  std::filesystem::create_directories(cfg.out_dir);

  TrainState st;
  if (cfg.resume_from.empty()) {
    st = init_state(cfg);
  } else {
    st = state_from_container(cfg, load_container(cfg.resume_from));
  }

  TrainResult result;
  result.metrics_path = cfg.out_dir + "/metrics.csv";
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw IoError("cannot open '" + result.metrics_path + "'");
  metrics << metrics_header(cfg) << '\n';
  metrics.flush();

  const auto eval_env = make_env(cfg.env_id);
  const int per_mb = cfg.parallel_envs * cfg.n_steps;
  const int mb_count = (cfg.steps_per_epoch + per_mb - 1) / per_mb;
  const bool has_gail = std::any_of(
      st.prefs.begin(), st.prefs.end(),
      [](const ActivePreference& p) { return p.spec.kind == PrefKind::Gail; });

  std::vector<double> thresholds;
  for (const auto& p : cfg.preferences) thresholds.push_back(p.threshold);

  Container last_good = state_to_container(cfg, st);

  for (int epoch = st.epochs_done; epoch < cfg.epochs; ++epoch) {
    try {
      // Discriminator step from the previous epoch's on-policy sample.
      if (has_gail && st.agent_obs_buffer.rows() > 0) {
        for (auto& ap : st.prefs) {
          if (ap.spec.kind != PrefKind::Gail) continue;
          const Mat demo_batch =
              sample_demo_batch(st.demo_sa, ap.spec.disc_batch, st.gail_demo_stream);
          const Mat agent_sa = state_action_matrix(
              st.agent_obs_buffer, st.agent_action_buffer, ap.gail->action_count);
          gail_discriminator_step(*ap.gail, demo_batch, agent_sa);
        }
      }

      Vec sum_d = Vec::Zero(static_cast<Eigen::Index>(st.prefs.size()));
      double sum_policy = 0.0, sum_value = 0.0, sum_entropy = 0.0;
      std::vector<Vec> epoch_obs;
      std::vector<int> epoch_actions;

      for (int mb = 0; mb < mb_count; ++mb) {
        RolloutBatch batch = collect(st.ac, st.pool, cfg.n_steps, st.collect_stream);
        compute_returns(batch, st.ac, cfg.gamma);
        for (auto& ap : st.prefs)
          if (ap.spec.kind == PrefKind::Gail)
            ap.a_gail = gail_advantage(*ap.gail, batch, cfg.gamma);

        if (cfg.algorithm == "a2c") {
          A2cLoss loss = a2c_loss(batch, st.ac, cfg.beta, cfg.value_coef);
          apply_step(st.ac.policy, loss.g_policy, st.opt_policy);
          apply_step(st.ac.value, loss.g_value, st.opt_value);
          sum_policy += loss.policy_term;
          sum_value += loss.value_term;
          sum_entropy += loss.mean_entropy;
        } else {
          MpacLossResult loss =
              mpac_loss(batch, st.ac, st.prefs, st.lam, cfg.beta, cfg.value_coef);
          apply_step(st.ac.policy, loss.g_policy, st.opt_policy);
          apply_step(st.ac.value, loss.g_value, st.opt_value);
          sum_policy += loss.policy_term;
          sum_value += loss.value_term;
          sum_entropy += loss.mean_entropy;
          for (std::size_t k = 0; k < loss.mean_d.size(); ++k)
            sum_d(static_cast<Eigen::Index>(k)) += loss.mean_d[k];
        }

        for (auto& ap : st.prefs)
          if (ap.spec.kind == PrefKind::Conserve)
            polyak_update(ap.target, st.ac.policy, ap.spec.eta);

        if (has_gail) {
          for (const auto& tr : batch.transitions) {
            epoch_obs.push_back(tr.obs);
            epoch_actions.push_back(tr.action);
          }
        }
        st.env_steps += static_cast<std::uint64_t>(batch.size());
      }

      MetricsRow row;
      row.epoch = epoch;
      row.policy_loss = sum_policy / mb_count;
      row.value_loss = sum_value / mb_count;
      row.entropy = sum_entropy / mb_count;
      if (cfg.algorithm == "mpac" && !st.prefs.empty()) {
        std::vector<double> mean_d(st.prefs.size());
        for (std::size_t k = 0; k < st.prefs.size(); ++k)
          mean_d[k] = sum_d(static_cast<Eigen::Index>(k)) / mb_count;
        lambda_step(st.lam, mean_d, thresholds);
        st.lam.history.push_back(
            {epoch,
             std::vector<double>(st.lam.lambda.data(),
                                 st.lam.lambda.data() + st.lam.lambda.size()),
             mean_d});
        row.mean_d = mean_d;
        row.lambda.assign(st.lam.lambda.data(),
                          st.lam.lambda.data() + st.lam.lambda.size());
      }

      if (has_gail && !epoch_obs.empty()) {
        st.agent_obs_buffer.resize(static_cast<Eigen::Index>(epoch_obs.size()),
                                   epoch_obs.front().size());
        for (std::size_t i = 0; i < epoch_obs.size(); ++i)
          st.agent_obs_buffer.row(static_cast<Eigen::Index>(i)) =
              epoch_obs[i].transpose();
        st.agent_action_buffer = epoch_actions;
      }

      const EvalStats eval = evaluate(
          st.ac, *eval_env, cfg.eval_episodes,
          derive_seed(cfg.seed, 0xEE, static_cast<std::uint64_t>(epoch)),
          cfg.greedy_eval);
      row.env_steps = st.env_steps;
      row.eval_mean = eval.mean;
      row.eval_min = eval.min;
      row.eval_max = eval.max;

      metrics << metrics_line(row) << '\n';
      metrics.flush();
      result.rows.push_back(row);
      if (cb) cb(row);

      st.epochs_done = epoch + 1;
      last_good = state_to_container(cfg, st);
      if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
        char name[48];
        std::snprintf(name, sizeof name, "/checkpoint-epoch%05d.bin", epoch + 1);
        save_container(last_good, cfg.out_dir + name);
      }
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
    } catch (const InvalidState& e) {
      result.aborted = true;
      result.abort_reason = e.what();
    }
    if (result.aborted) {
      result.checkpoint_path = cfg.out_dir + "/checkpoint-abort.bin";
      save_container(last_good, result.checkpoint_path);
      break;
    }
  }

  if (!result.aborted) {
    result.checkpoint_path = cfg.out_dir + "/checkpoint-final.bin";
    save_container(last_good, result.checkpoint_path);
  }
  result.ac = st.ac;
  result.env_steps = st.env_steps;
  return result;
}

}  // namespace mpac
