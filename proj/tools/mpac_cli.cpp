// Command-line trainer for the M-PAC library. Talks to the core
// exclusively through the C API in mpac/mpac.h.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpac/mpac.h"

namespace {

int die(mpac_status s) {
  std::fprintf(stderr, "error (%s): %s\n", mpac_status_name(s), mpac_last_error());
  return static_cast<int>(s);
}

struct ConfigGuard {
  mpac_config* cfg = nullptr;
  ~ConfigGuard() { mpac_config_free(cfg); }
};

struct DemosGuard {
  mpac_demos* demos = nullptr;
  ~DemosGuard() { mpac_demos_free(demos); }
};

mpac_status build_config(const std::string& config_path,
                         const std::vector<std::string>& sets, ConfigGuard& g) {
  mpac_status s = config_path.empty() ? mpac_config_create(&g.cfg)
                                      : mpac_config_load(config_path.c_str(), &g.cfg);
  if (s != MPAC_OK) return s;
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      return MPAC_ERR_INVALID_ARGUMENT;
    }
    s = mpac_config_set(g.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != MPAC_OK) return s;
  }
  return MPAC_OK;
}

void print_epoch(const mpac_metrics_row* row, void* user) {
  if (user && *static_cast<bool*>(user)) return;  // quiet
  std::printf("epoch %4d  steps %8llu  eval mean % .2f  min % .2f  max % .2f\n",
              row->epoch, static_cast<unsigned long long>(row->env_steps),
              row->eval_mean, row->eval_min, row->eval_max);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"M-PAC: constrained policy-gradient training"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run the training loop");
  std::string train_config;
  std::vector<std::string> train_sets;
  bool quiet = false;
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--set", train_sets, "override a config field, key=value");
  train->add_flag("--quiet", quiet, "suppress per-epoch output");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpointed policy");
  std::string eval_ckpt, eval_env;
  std::uint32_t eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  bool eval_greedy = false;
  eval->add_option("--checkpoint", eval_ckpt, "policy checkpoint")->required();
  eval->add_option("--env", eval_env, "environment id (defaults to the checkpoint's)");
  eval->add_option("--episodes", eval_episodes, "episodes to run");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_flag("--greedy", eval_greedy, "take argmax actions");

  // record-demos
  auto* rec = app.add_subcommand("record-demos", "record demonstration pairs");
  std::string rec_ckpt, rec_scripted, rec_env, rec_out;
  std::uint64_t rec_n = 10000, rec_seed = 0;
  bool rec_greedy = false;
  rec->add_option("--checkpoint", rec_ckpt, "record from this policy checkpoint");
  rec->add_option("--scripted", rec_scripted,
                  "record from a built-in controller (pendulum-energy, chain-right)");
  rec->add_option("--env", rec_env, "environment id");
  rec->add_option("--n", rec_n, "number of (observation, action) pairs");
  rec->add_option("--seed", rec_seed, "recording seed");
  rec->add_flag("--greedy", rec_greedy, "argmax actions instead of sampling");
  rec->add_option("--out", rec_out, "output demonstration file")->required();

  // clone
  auto* clone = app.add_subcommand("clone", "behavior-clone a demonstration file");
  std::string clone_demos, clone_out, clone_hidden = "512,512";
  std::uint32_t clone_epochs = 20, clone_batch = 64;
  double clone_lr = 1e-4, clone_dropout = 0.2;
  std::uint64_t clone_seed = 0;
  clone->add_option("--demos", clone_demos, "demonstration file")->required();
  clone->add_option("--out", clone_out, "output policy checkpoint")->required();
  clone->add_option("--hidden", clone_hidden, "hidden layer sizes, e.g. 512,512");
  clone->add_option("--epochs", clone_epochs, "training epochs");
  clone->add_option("--batch", clone_batch, "minibatch size");
  clone->add_option("--lr", clone_lr, "adam step size");
  clone->add_option("--dropout", clone_dropout, "dropout rate during training");
  clone->add_option("--seed", clone_seed, "initialization/shuffle seed");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    ConfigGuard g;
    mpac_status s = build_config(train_config, train_sets, g);
    if (s != MPAC_OK) return die(s);
    mpac_train_result result{};
    s = mpac_train(g.cfg, print_epoch, &quiet, &result);
    if (s != MPAC_OK) return die(s);
    std::printf("done: %d epochs, %llu env steps, final eval mean %.2f\n",
                result.epochs_run, static_cast<unsigned long long>(result.env_steps),
                result.final_eval_mean);
    return 0;
  }

  if (eval->parsed()) {
    mpac_eval_stats stats{};
    const mpac_status s =
        mpac_evaluate(eval_ckpt.c_str(), eval_env.empty() ? nullptr : eval_env.c_str(),
                      eval_episodes, eval_seed, eval_greedy ? 1 : 0, &stats);
    if (s != MPAC_OK) return die(s);
    std::printf("episodes %u  mean %.4f  min %.4f  max %.4f\n", eval_episodes,
                stats.mean, stats.min, stats.max);
    return 0;
  }

  if (rec->parsed()) {
    if (rec_ckpt.empty() == rec_scripted.empty()) {
      std::fprintf(stderr, "error: give exactly one of --checkpoint or --scripted\n");
      return 2;
    }
    DemosGuard g;
    double mean_return = 0.0;
    mpac_status s;
    if (!rec_scripted.empty()) {
      if (rec_env.empty()) {
        std::fprintf(stderr, "error: --scripted requires --env\n");
        return 2;
      }
      s = mpac_demos_record_scripted(rec_scripted.c_str(), rec_env.c_str(), rec_n,
                                     rec_seed, &g.demos, &mean_return);
    } else {
      s = mpac_demos_record_policy(rec_ckpt.c_str(),
                                   rec_env.empty() ? nullptr : rec_env.c_str(), rec_n,
                                   rec_seed, rec_greedy ? 1 : 0, &g.demos,
                                   &mean_return);
    }
    if (s != MPAC_OK) return die(s);
    s = mpac_demos_save(g.demos, rec_out.c_str());
    if (s != MPAC_OK) return die(s);
    std::printf("recorded %llu pairs to %s (generator mean return %.4f)\n",
                static_cast<unsigned long long>(mpac_demos_count(g.demos)),
                rec_out.c_str(), mean_return);
    return 0;
  }

  if (clone->parsed()) {
    const mpac_status s = mpac_behavior_clone(
        clone_demos.c_str(), clone_out.c_str(), clone_hidden.c_str(), clone_epochs,
        clone_batch, clone_lr, clone_dropout, clone_seed);
    if (s != MPAC_OK) return die(s);
    std::printf("cloned %s -> %s\n", clone_demos.c_str(), clone_out.c_str());
    return 0;
  }

  return 0;
}
