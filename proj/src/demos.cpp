#include "mpac/demos.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpac/errors.hpp"

namespace mpac {

std::size_t DemonstrationSet::pair_count() const {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.size();
  return n;
}

int DemonstrationSet::obs_dim() const {
  for (const auto& ep : episodes)
    if (!ep.empty()) return static_cast<int>(ep.front().obs.size());
  throw InvalidState("DemonstrationSet: empty set has no observation dimension");
}

Mat DemonstrationSet::obs_matrix() const {
  Mat m(pair_count(), obs_dim());
  Eigen::Index r = 0;
  for (const auto& ep : episodes)
    for (const auto& p : ep) m.row(r++) = p.obs.transpose();
  return m;
}

std::vector<int> DemonstrationSet::all_actions() const {
  std::vector<int> a;
  a.reserve(pair_count());
  for (const auto& ep : episodes)
    for (const auto& p : ep) a.push_back(p.action);
  return a;
}

namespace {

using Chooser = std::function<int(const Vec& obs, Rng& rng)>;

DemonstrationSet record_impl(const Chooser& choose, Env& env,
                             std::size_t n_transitions, std::uint64_t seed,
                             const std::string& generator, RecordStats* stats) {
  if (n_transitions < 1)
    throw InvalidArgument("record: need at least one transition");
  DemonstrationSet set;
  set.env_id = env.id();
  set.generator = generator;
  Rng action_rng(derive_seed(seed, 0xAC));

  Vec obs = env.reset(derive_seed(seed, 0xE5));
  std::vector<DemoPair> episode;
  double ep_return = 0.0;
  double return_sum = 0.0;
  int completed = 0;
  for (std::size_t i = 0; i < n_transitions; ++i) {
    const int action = choose(obs, action_rng);
    episode.push_back({obs, action});
    StepResult sr = env.step(action);
    ep_return += sr.reward;
    if (sr.done) {
      set.episodes.push_back(std::move(episode));
      episode.clear();
      return_sum += ep_return;
      completed += 1;
      ep_return = 0.0;
      obs = env.reset();
    } else {
      obs = sr.obs;
    }
  }
  if (!episode.empty()) set.episodes.push_back(std::move(episode));
  if (stats) {
    stats->completed_episodes = completed;
    stats->mean_return = completed > 0 ? return_sum / completed : ep_return;
  }
  return set;
}

}  // namespace

DemonstrationSet record(const ActorCritic& ac, Env& env, std::size_t n_transitions,
                        std::uint64_t seed, bool greedy, RecordStats* stats) {
  Chooser choose = [&ac, greedy](const Vec& obs, Rng& rng) {
    Categorical dist = action_dist(ac, obs);
    return greedy ? argmax_action(dist) : sample(dist, rng);
  };
  return record_impl(choose, env, n_transitions, seed,
                     greedy ? "policy:greedy" : "policy:sampled", stats);
}

DemonstrationSet record_scripted(const ScriptedPolicy& policy, Env& env,
                                 std::size_t n_transitions, std::uint64_t seed,
                                 RecordStats* stats) {
  Chooser choose = [&policy](const Vec& obs, Rng&) { return policy(obs); };
  return record_impl(choose, env, n_transitions, seed, "scripted", stats);
}

void save_demos(const DemonstrationSet& set, const std::string& path) {
  if (set.pair_count() == 0)
    throw InvalidArgument("save_demos: refusing to save an empty set");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "mpac-demos 1 " << set.env_id << ' ' << set.pair_count() << ' '
    << set.generator << '\n';
  char buf[64];
  for (std::size_t e = 0; e < set.episodes.size(); ++e) {
    for (std::size_t t = 0; t < set.episodes[e].size(); ++t) {
      const DemoPair& p = set.episodes[e][t];
      f << e << ' ' << t;
      for (Eigen::Index i = 0; i < p.obs.size(); ++i) {
        std::snprintf(buf, sizeof buf, " %a", p.obs(i));
        f << buf;
      }
      f << ' ' << p.action << '\n';
    }
  }
  f.close();
  if (!f) throw IoError("write to '" + path + "' failed");
}

DemonstrationSet load_demos(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty demonstration file", 1);
  std::istringstream header(line);
  std::string tag;
  int version = 0;
  DemonstrationSet set;
  std::size_t declared = 0;
  if (!(header >> tag >> version >> set.env_id >> declared) || tag != "mpac-demos")
    throw ParseError("bad demonstration header", 1);
  if (version != 1) throw ParseError("unsupported demonstration format version", 1);
  std::getline(header, set.generator);
  if (!set.generator.empty() && set.generator.front() == ' ')
    set.generator.erase(0, 1);

  // The named environment pins observation and action dimensions.
  const auto env = make_env(set.env_id);
  const int obs_dim = env->obs_dim();
  const int n_actions = env->action_count();

  long line_no = 1;
  std::size_t expected_ep = 0;
  std::vector<DemoPair> episode;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::size_t ep = 0, step = 0;
    if (!(is >> ep >> step)) throw ParseError("bad record line", line_no);
    Vec obs(obs_dim);
    for (int i = 0; i < obs_dim; ++i) {
      std::string tok;
      if (!(is >> tok)) throw ParseError("truncated observation", line_no);
      char* end = nullptr;
      obs(i) = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw ParseError("bad observation value '" + tok + "'", line_no);
    }
    int action = -1;
    if (!(is >> action)) throw ParseError("missing action index", line_no);
    if (action < 0 || action >= n_actions)
      throw ParseError("action index out of range for " + set.env_id, line_no);
    std::string extra;
    if (is >> extra) throw ParseError("trailing tokens", line_no);

    if (ep == expected_ep + 1) {
      set.episodes.push_back(std::move(episode));
      episode.clear();
      expected_ep = ep;
    } else if (ep != expected_ep) {
      throw ParseError("episode indices must be contiguous", line_no);
    }
    if (step != episode.size())
      throw ParseError("step indices must be contiguous within an episode", line_no);
    episode.push_back({std::move(obs), action});
  }
  if (!episode.empty()) set.episodes.push_back(std::move(episode));
  if (set.pair_count() == 0) throw ParseError("demonstration file has no pairs", line_no);
  if (set.pair_count() != declared)
    throw ParseError("pair count mismatch: header declares " +
                         std::to_string(declared) + ", found " +
                         std::to_string(set.pair_count()),
                     line_no);
  return set;
}

ParamSet behavior_clone(const DemonstrationSet& set, std::span<const int> layer_sizes,
                        int epochs, int batch_size, double dropout_rate,
                        std::uint64_t seed, double lr) {
  if (set.pair_count() == 0)
    throw InvalidArgument("behavior_clone: empty demonstration set");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw InvalidArgument("behavior_clone: dropout rate must lie in [0, 1)");
  if (epochs < 0) throw InvalidArgument("behavior_clone: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("behavior_clone: batch size must be >= 1");

  ParamSet net = init_mlp(layer_sizes, derive_seed(seed, 0xBC));
  if (net.input_dim() != set.obs_dim())
    throw InvalidArgument("behavior_clone: net input does not match observations");
  const Mat all_obs = set.obs_matrix();
  const std::vector<int> all_actions = set.all_actions();
  for (int a : all_actions)
    if (a >= net.output_dim())
      throw InvalidArgument("behavior_clone: action index exceeds net output width");
  if (epochs == 0) return net;

  OptimizerState opt = OptimizerState::adam(net, lr);
  Rng stream(derive_seed(seed, 0xBD));
  const int n = static_cast<int>(set.pair_count());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  const DropoutSpec dropout{dropout_rate};

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates shuffle on the pinned stream.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(stream.below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < n; start += batch_size) {
      const int b = std::min(batch_size, n - start);
      Mat x(b, all_obs.cols());
      std::vector<int> acts(b);
      for (int i = 0; i < b; ++i) {
        x.row(i) = all_obs.row(order[start + i]);
        acts[i] = all_actions[order[start + i]];
      }
      ForwardTape tape;
      const Mat logits = forward(net, x, &tape, dropout, &stream);
      const Mat logp = log_softmax_rows(logits);
      const double inv_b = 1.0 / static_cast<double>(b);
      Mat dlogits(b, logits.cols());
      for (int i = 0; i < b; ++i) {
        dlogits.row(i) = inv_b * logp.row(i).array().exp().matrix();
        dlogits(i, acts[i]) -= inv_b;
      }
      GradSet grads = backward(net, tape, dlogits);
      apply_step(net, grads, opt);
    }
  }
  return net;
}

ScriptedPolicy scripted_policy(std::string_view script_id, const Env& env) {
  if (script_id == "chain-right") {
    if (env.action_count() != 2)
      throw InvalidArgument("chain-right expects a two-action environment");
    return [](const Vec&) { return 1; };
  }
  if (script_id == "pendulum-energy") {
    if (env.id() != "pendulum-disc9")
      throw InvalidArgument("pendulum-energy expects pendulum-disc9");
    // Energy pumping toward the upright energy level, with a linear
    // stabilizer once the pendulum is nearly upright and slow.
    return [](const Vec& obs) {
      const double theta = std::atan2(obs(1), obs(0));
      const double theta_dot = obs(2);
      const double energy = theta_dot * theta_dot / 6.0 + 5.0 * std::cos(theta);
      double u;
      if (std::abs(theta) < 0.35 && std::abs(theta_dot) < 2.5) {
        u = -10.0 * theta - 2.5 * theta_dot;
      } else {
        const double drive = 2.0 * (5.0 - energy);
        u = (theta_dot >= 0.0 ? 1.0 : -1.0) * drive;
      }
      u = std::clamp(u, -2.0, 2.0);
      const int idx = static_cast<int>(std::lround((u + 2.0) / 0.5));
      return std::clamp(idx, 0, 8);
    };
  }
  throw InvalidArgument("unknown scripted policy '" + std::string(script_id) + "'");
}

}  // namespace mpac
