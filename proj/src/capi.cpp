#include "mpac/mpac.h"

#include <cctype>
#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mpac/demos.hpp"
#include "mpac/errors.hpp"
#include "mpac/harness.hpp"
#include "mpac/serialize.hpp"

using nlohmann::json;

struct mpac_config {
  json doc = json::object();
};

struct mpac_demos {
  mpac::DemonstrationSet set;
};

namespace {

thread_local std::string g_last_error;

mpac_status fail(mpac_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Every entry point funnels through here so exceptions never cross the
// C boundary.
template <typename Fn>
mpac_status guarded(Fn&& fn) {
  try {
    fn();
    return MPAC_OK;
  } catch (const mpac::InvalidArgument& e) {
    return fail(MPAC_ERR_INVALID_ARGUMENT, e.what());
  } catch (const mpac::InvalidState& e) {
    return fail(MPAC_ERR_INVALID_STATE, e.what());
  } catch (const mpac::ConfigError& e) {
    return fail(MPAC_ERR_CONFIG, e.what());
  } catch (const mpac::ParseError& e) {
    return fail(MPAC_ERR_PARSE, e.what());
  } catch (const mpac::IoError& e) {
    return fail(MPAC_ERR_IO, e.what());
  } catch (const mpac::NumericError& e) {
    return fail(MPAC_ERR_NUMERIC, e.what());
  } catch (const json::exception& e) {
    return fail(MPAC_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return fail(MPAC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MPAC_ERR_INTERNAL, "unknown error");
  }
}

json* resolve_path(json& doc, const std::string& key, bool create) {
  json* node = &doc;
  std::size_t pos = 0;
  while (pos <= key.size()) {
    const std::size_t dot = key.find('.', pos);
    const std::string part =
        key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw mpac::InvalidArgument("bad config key '" + key + "'");
    if (node->is_array() || (!part.empty() && std::isdigit(part.front()))) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw mpac::InvalidArgument("bad array index '" + part + "' in key '" + key + "'");
      }
      if (!node->is_array()) {
        if (!create) throw mpac::InvalidArgument("'" + key + "' indexes a non-array");
        *node = json::array();
      }
      while (node->size() <= idx) {
        if (!create) throw mpac::InvalidArgument("index out of range in '" + key + "'");
        node->push_back(json::object());
      }
      node = &(*node)[idx];
    } else {
      if (!node->is_object()) {
        if (!create) throw mpac::InvalidArgument("'" + key + "' descends into a scalar");
        *node = json::object();
      }
      if (!node->contains(part)) {
        if (!create) throw mpac::InvalidArgument("config has no field '" + key + "'");
        (*node)[part] = json();
      }
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return node;
}

mpac::RunConfig to_run_config(const mpac_config* cfg) {
  if (!cfg) throw mpac::InvalidArgument("null config handle");
  return mpac::parse_config_text(cfg->doc.dump());
}

mpac::ParamSet load_policy_checkpoint(const std::string& path, std::string* env_hint) {
  const mpac::Container c = mpac::load_container(path);
  if (env_hint) {
    if (auto it = c.find("env"); it != c.end())
      if (const auto* s = std::get_if<std::string>(&it->second)) *env_hint = *s;
  }
  if (mpac::container_has_paramset(c, "policy."))
    return mpac::paramset_from_container(c, "policy.");
  if (mpac::container_has_paramset(c, "net."))
    return mpac::paramset_from_container(c, "net.");
  throw mpac::ParseError("'" + path + "' holds no policy network");
}

std::vector<int> parse_hidden_spec(const char* spec) {
  std::vector<int> hidden;
  if (!spec || !*spec) return hidden;
  std::string s(spec);
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos
                                              ? std::string::npos
                                              : comma - pos);
    try {
      hidden.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw mpac::InvalidArgument("bad hidden layer spec '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return hidden;
}

}  // namespace

extern "C" {

const char* mpac_status_name(mpac_status s) {
  switch (s) {
    case MPAC_OK: return "ok";
    case MPAC_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case MPAC_ERR_INVALID_STATE: return "invalid-state";
    case MPAC_ERR_CONFIG: return "config-error";
    case MPAC_ERR_PARSE: return "parse-error";
    case MPAC_ERR_IO: return "io-error";
    case MPAC_ERR_NUMERIC: return "numeric-error";
    case MPAC_ERR_INTERNAL: return "internal-error";
  }
  return "?";
}

const char* mpac_last_error(void) { return g_last_error.c_str(); }

const char* mpac_version(void) { return "0.1.0"; }

mpac_status mpac_config_create(mpac_config** out) {
  return guarded([&] {
    if (!out) throw mpac::InvalidArgument("null output pointer");
    *out = new mpac_config();
  });
}

mpac_status mpac_config_load(const char* path, mpac_config** out) {
  return guarded([&] {
    if (!path || !out) throw mpac::InvalidArgument("null argument");
    std::ifstream f(path);
    if (!f) throw mpac::IoError(std::string("cannot open config file '") + path + "'");
    json doc;
    try {
      doc = json::parse(f);
    } catch (const json::parse_error& e) {
      throw mpac::ParseError(std::string("config: ") + e.what());
    }
    mpac::parse_config_text(doc.dump());  // validate now
    *out = new mpac_config{std::move(doc)};
  });
}

mpac_status mpac_config_set(mpac_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    if (!cfg || !key || !value) throw mpac::InvalidArgument("null argument");
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = std::string(value);  // bare strings are taken verbatim
    }
    *resolve_path(cfg->doc, key, true) = std::move(parsed);
  });
}

mpac_status mpac_config_get(const mpac_config* cfg, const char* key, char* buf,
                            size_t buflen) {
  return guarded([&] {
    if (!cfg || !key || !buf || buflen == 0)
      throw mpac::InvalidArgument("null argument");
    // Unset fields fall back to the validated defaults.
    json doc = cfg->doc;
    const mpac::RunConfig rc = mpac::parse_config_text(doc.dump());
    json full = json::parse(mpac::config_to_json_text(rc));
    const json* node = resolve_path(full, key, false);
    const std::string text = node->dump();
    if (text.size() + 1 > buflen)
      throw mpac::InvalidArgument("buffer too small for '" + text + "'");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

mpac_status mpac_config_add_preference(mpac_config* cfg, const char* json_spec) {
  return guarded([&] {
    if (!cfg || !json_spec) throw mpac::InvalidArgument("null argument");
    json spec;
    try {
      spec = json::parse(json_spec);
    } catch (const json::parse_error& e) {
      throw mpac::ParseError(std::string("preference spec: ") + e.what());
    }
    if (!cfg->doc.contains("preferences")) cfg->doc["preferences"] = json::array();
    cfg->doc["preferences"].push_back(std::move(spec));
  });
}

mpac_status mpac_config_validate(const mpac_config* cfg) {
  return guarded([&] { to_run_config(cfg); });
}

void mpac_config_free(mpac_config* cfg) { delete cfg; }

mpac_status mpac_train(const mpac_config* cfg, mpac_epoch_callback cb, void* user,
                       mpac_train_result* out) {
  return guarded([&] {
    const mpac::RunConfig rc = to_run_config(cfg);
    mpac::EpochCallback bridge;
    if (cb) {
      bridge = [cb, user](const mpac::MetricsRow& row) {
        mpac_metrics_row r;
        r.epoch = row.epoch;
        r.env_steps = row.env_steps;
        r.eval_mean = row.eval_mean;
        r.eval_min = row.eval_min;
        r.eval_max = row.eval_max;
        cb(&r, user);
      };
    }
    const mpac::TrainResult tr = mpac::train(rc, bridge);
    if (out) {
      out->epochs_run = static_cast<int32_t>(tr.rows.size());
      out->env_steps = tr.env_steps;
      out->final_eval_mean = tr.rows.empty() ? 0.0 : tr.rows.back().eval_mean;
      out->aborted = tr.aborted ? 1 : 0;
    }
    if (tr.aborted)
      throw mpac::NumericError("training aborted: " + tr.abort_reason +
                               " (last good state in " + tr.checkpoint_path + ")");
  });
}

mpac_status mpac_evaluate(const char* checkpoint_path, const char* env_id,
                          uint32_t episodes, uint64_t seed, int greedy,
                          mpac_eval_stats* out) {
  return guarded([&] {
    if (!checkpoint_path || !out) throw mpac::InvalidArgument("null argument");
    std::string env_hint;
    const mpac::ParamSet policy = load_policy_checkpoint(checkpoint_path, &env_hint);
    const std::string env_name = env_id && *env_id ? env_id : env_hint;
    if (env_name.empty())
      throw mpac::InvalidArgument(
          "no environment id given and the checkpoint names none");
    auto env = mpac::make_env(env_name);
    const mpac::EvalStats st = mpac::evaluate_policy(
        policy, *env, static_cast<int>(episodes), seed, greedy != 0);
    out->mean = st.mean;
    out->min = st.min;
    out->max = st.max;
  });
}

mpac_status mpac_demos_record_policy(const char* checkpoint_path, const char* env_id,
                                     uint64_t n, uint64_t seed, int greedy,
                                     mpac_demos** out, double* mean_return) {
  return guarded([&] {
    if (!checkpoint_path || !out) throw mpac::InvalidArgument("null argument");
    std::string env_hint;
    mpac::ActorCritic ac;
    ac.policy = load_policy_checkpoint(checkpoint_path, &env_hint);
    const std::string env_name = env_id && *env_id ? env_id : env_hint;
    if (env_name.empty())
      throw mpac::InvalidArgument(
          "no environment id given and the checkpoint names none");
    auto env = mpac::make_env(env_name);
    // record() only samples the policy head; give the critic slot a stub.
    const int vs[] = {ac.policy.input_dim(), 1};
    ac.value = mpac::init_mlp(vs, 0);
    mpac::RecordStats stats;
    auto* d = new mpac_demos{mpac::record(ac, *env, n, seed, greedy != 0, &stats)};
    if (mean_return) *mean_return = stats.mean_return;
    *out = d;
  });
}

mpac_status mpac_demos_record_scripted(const char* script_id, const char* env_id,
                                       uint64_t n, uint64_t seed, mpac_demos** out,
                                       double* mean_return) {
  return guarded([&] {
    if (!script_id || !env_id || !out) throw mpac::InvalidArgument("null argument");
    auto env = mpac::make_env(env_id);
    const mpac::ScriptedPolicy policy = mpac::scripted_policy(script_id, *env);
    mpac::RecordStats stats;
    auto* d = new mpac_demos{mpac::record_scripted(policy, *env, n, seed, &stats)};
    if (mean_return) *mean_return = stats.mean_return;
    *out = d;
  });
}

mpac_status mpac_demos_load(const char* path, mpac_demos** out) {
  return guarded([&] {
    if (!path || !out) throw mpac::InvalidArgument("null argument");
    *out = new mpac_demos{mpac::load_demos(path)};
  });
}

mpac_status mpac_demos_save(const mpac_demos* demos, const char* path) {
  return guarded([&] {
    if (!demos || !path) throw mpac::InvalidArgument("null argument");
    mpac::save_demos(demos->set, path);
  });
}

uint64_t mpac_demos_count(const mpac_demos* demos) {
  return demos ? demos->set.pair_count() : 0;
}

void mpac_demos_free(mpac_demos* demos) { delete demos; }

mpac_status mpac_behavior_clone(const char* demos_path, const char* out_checkpoint,
                                const char* hidden_spec, uint32_t epochs,
                                uint32_t batch_size, double lr, double dropout,
                                uint64_t seed) {
  return guarded([&] {
    if (!demos_path || !out_checkpoint) throw mpac::InvalidArgument("null argument");
    const mpac::DemonstrationSet set = mpac::load_demos(demos_path);
    const auto env = mpac::make_env(set.env_id);
    std::vector<int> sizes;
    sizes.push_back(env->obs_dim());
    for (int h : parse_hidden_spec(hidden_spec)) sizes.push_back(h);
    sizes.push_back(env->action_count());
    const mpac::ParamSet policy =
        mpac::behavior_clone(set, sizes, static_cast<int>(epochs),
                             static_cast<int>(batch_size), dropout, seed, lr);
    mpac::Container c;
    c["format"] = std::string("mpac-policy-v1");
    c["env"] = set.env_id;
    mpac::paramset_to_container(policy, "policy.", c);
    mpac::save_container(c, out_checkpoint);
  });
}

}  // extern "C"
