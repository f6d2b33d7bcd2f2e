// SPDX-License-Identifier: Apache-2.0
#include "lmpc/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <utility>

#include "lmpc/error.hpp"

namespace lmpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string show(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}
std::string show(std::size_t n) { return std::to_string(n); }
std::string show(bool b) { return b ? "true" : "false"; }
std::string show(const std::string& s) { return s; }

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
Entry field(const char* key, Ref ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  Entry e;
  e.key = key;
  e.set = [ref](RunConfig& c, const std::string& k, const std::string& v) {
    T& f = ref(c);
    if constexpr (std::is_same_v<T, double>) f = parse_double(k, v);
    else if constexpr (std::is_same_v<T, bool>) f = parse_bool(k, v);
    else if constexpr (std::is_same_v<T, std::string>) f = v;
    else f = parse_int<T>(k, v);
  };
  e.get = [ref](const RunConfig& c) { return show(ref(c)); };
  return e;
}

#define LMPC_FIELD(key, expr) \
  field(key, [](auto& c) -> auto& { return c.expr; })

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = {
      LMPC_FIELD("env.name", env_name),
      LMPC_FIELD("seed", seed),
      LMPC_FIELD("ensemble.E", ensemble_size),
      LMPC_FIELD("out", out),
      LMPC_FIELD("threads", threads),
      LMPC_FIELD("rssm.h_dim", rssm.h_dim),
      LMPC_FIELD("rssm.s_dim", rssm.s_dim),
      LMPC_FIELD("rssm.hidden_dim", rssm.hidden_dim),
      LMPC_FIELD("rssm.min_std", rssm.min_std),
      LMPC_FIELD("rssm.free_nats", rssm.free_nats),
      LMPC_FIELD("rssm.reward_scale", rssm.reward_scale),
      LMPC_FIELD("rssm.obs_std", rssm.obs_std),
      LMPC_FIELD("train.batch", train.batch),
      LMPC_FIELD("train.segment_length", train.segment_length),
      LMPC_FIELD("train.learning_rate", train.learning_rate),
      LMPC_FIELD("train.grad_clip", train.grad_clip),
      LMPC_FIELD("train.weight_decay", train.weight_decay),
      LMPC_FIELD("plan.K", plan.K),
      LMPC_FIELD("plan.U", plan.U),
      LMPC_FIELD("plan.T", plan.T),
      LMPC_FIELD("plan.M", plan.M),
      LMPC_FIELD("plan.lambda", plan.lambda),
      LMPC_FIELD("plan.kappa", plan.kappa),
      LMPC_FIELD("plan.elite_fraction", plan.elite_fraction),
      LMPC_FIELD("plan.sigma_floor", plan.sigma_floor),
      LMPC_FIELD("plan.pi_floor", plan.pi_floor),
      LMPC_FIELD("plan.init_std", plan.init_std),
      LMPC_FIELD("plan.likelihood", plan.likelihood),
      LMPC_FIELD("agent.seed_episodes", agent.seed_episodes),
      LMPC_FIELD("agent.train_steps", agent.train_steps),
      LMPC_FIELD("agent.outer_iterations", agent.outer_iterations),
      LMPC_FIELD("agent.explore_noise", agent.explore_noise),
      LMPC_FIELD("agent.eval_every", agent.eval_every),
      LMPC_FIELD("io.wall_clock", wall_clock),
      LMPC_FIELD("io.keep_checkpoints", keep_checkpoints),
      LMPC_FIELD("ablate.seeds", ablate_seeds),
      LMPC_FIELD("ablate.last_k", ablate_last_k),
  };
  return entries;
}

#undef LMPC_FIELD

}  // namespace

void RunConfig::validate() const {
  if (ensemble_size < 1) throw ConfigError("ensemble.E must be >= 1");
  if (out.empty()) throw ConfigError("out must not be empty");
  RssmConfig r = rssm;
  auto env = envs::make_env(env_name);
  r.obs_dim = env->spec().obs_dim;
  r.action_dim = env->spec().action_dim;
  r.validate();
  train.validate();
  plan.validate();
  agent.validate();
  if (ablate_seeds < 1) throw ConfigError("ablate.seeds must be >= 1");
  if (ablate_last_k < 1) throw ConfigError("ablate.last_k must be >= 1");
}

LoopConfig RunConfig::loop() const {
  LoopConfig l;
  l.agent = agent;
  l.plan = plan;
  l.train = train;
  l.rssm = rssm;
  l.ensemble_size = ensemble_size;
  l.seed = seed;
  return l;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : table()) keys.emplace_back(e.key);
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& e : table()) {
    if (key == e.key) {
      e.set(config, key, value);
      return;
    }
  }
  std::string valid;
  for (const auto& e : table()) valid += std::string(valid.empty() ? "" : ", ") + e.key;
  throw ConfigError("unknown config key '" + key + "' (valid keys: " + valid + ")");
}

namespace {

void apply_line(RunConfig& config, const std::string& raw, const std::string& where) {
  std::string line = raw;
  if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + line + "'");
  try {
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    apply_line(config, line, origin + ":" + std::to_string(n));
  }
}

RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  RunConfig config;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    apply_config_text(config, in, file.string());
  }
  for (const auto& o : overrides) apply_line(config, o, "--set");
  config.validate();
  return config;
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : table()) out += std::string(e.key) + "=" + e.get(config) + "\n";
  return out;
}

}  // namespace lmpc
