#pragma once

#include "qtm/baselines/optimize.hpp"
#include "qtm/env/presets.hpp"
#include "qtm/sac/config.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace qtm::pareto {

using env::Coupling;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings for running the deterministic policy after training.
struct ExtractSettings {
  std::uint64_t warmup = 2000;
  std::uint64_t window = 2000;
  double stability = 1e-4;  ///< relative change of the window-averaged power
  int max_windows = 10;
  double min_correlation = 0.5;  ///< smallest autocorrelation peak accepted as periodic
  bool record_coherence = true;
};

struct BaselineSettings {
  bool trapezoid = true;
  bool otto = true;
  baselines::TrapezoidOptions trap;
  baselines::OttoOptions otto_opt;
  double rel_tol = 1e-8;
  int max_periods = 10000;
};

struct ExperimentConfig {
  std::string machine = "qubit_refrigerator";
  env::EnvConfig env = env::qubit_refrigerator_preset();
  sac::SacConfig agent = sac::qubit_sac_preset(1.0);
  bool anneal_c = true;  ///< Fermi schedule from c_start to the run's c
  double c_start = 1.0;
  double c_mean = 170000.0;
  double c_decay = 20000.0;
  BaselineSettings baseline;
  ExtractSettings extract;
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> c_values{1.0};
  std::string output_dir = "runs";
  bool rerun_failed = true;
  std::uint64_t rerun_seed_offset = 1000;

  /// Agent settings for one run at weight c and the given seed.
  sac::SacConfig agent_for(double c, std::uint64_t seed) const {
    sac::SacConfig a = agent;
    a.seed = seed;
    if (anneal_c)
      a.weight = {c_start, c, c_mean, c_decay, false};
    else
      a.weight = {c, c, 0.0, 1.0, true};
    return a;
  }

  baselines::EvalOptions eval_options() const {
    baselines::EvalOptions e;
    e.rel_tol = baseline.rel_tol;
    e.max_periods = baseline.max_periods;
    return e;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_plain(const std::string& s, const std::string& key) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last) throw ConfigError(key + ": not a number: '" + s + "'");
  return v;
}

/// A number, a fraction a/b, or ln(x).
inline double parse_number(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s.size() > 4 && s.rfind("ln(", 0) == 0 && s.back() == ')') {
    const double x = parse_plain(trim(s.substr(3, s.size() - 4)), key);
    if (!(x > 0.0)) throw ConfigError(key + ": ln needs a positive argument");
    return std::log(x);
  }
  const auto slash = s.find('/');
  if (slash != std::string::npos) {
    const double a = parse_plain(trim(s.substr(0, slash)), key);
    const double b = parse_plain(trim(s.substr(slash + 1)), key);
    if (b == 0.0) throw ConfigError(key + ": division by zero");
    return a / b;
  }
  return parse_plain(s, key);
}

inline std::uint64_t parse_count(const std::string& raw, const std::string& key) {
  const double v = parse_number(raw, key);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) throw ConfigError(key + ": expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

inline bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false");
}

inline std::vector<std::string> split_list(const std::string& raw) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Coupling parse_coupling(const std::string& s, const std::string& key) {
  if (s == "None") return Coupling::None;
  if (s == "Hot") return Coupling::Hot;
  if (s == "Cold") return Coupling::Cold;
  if (s == "Both") return Coupling::Both;
  throw ConfigError(key + ": unknown coupling '" + s + "'");
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline sim::QubitModel& qubit(ExperimentConfig& c) {
  if (!c.env.is_qubit()) throw ConfigError("qubit.* keys need machine = qubit_refrigerator");
  return std::get<sim::QubitModel>(c.env.model);
}
inline sim::OscillatorModel& oscillator(ExperimentConfig& c) {
  if (c.env.is_qubit()) throw ConfigError("oscillator.* keys need machine = oscillator_engine");
  return std::get<sim::OscillatorModel>(c.env.model);
}

using Getter = std::function<double&(ExperimentConfig&)>;

inline Field num(std::string key, Getter ref) {
  return {key, [ref, key](ExperimentConfig& c, const std::string& v) { ref(c) = parse_number(v, key); },
          [ref](const ExperimentConfig& c) { return fmt(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <class Int>
Field count(std::string key, std::function<Int&(ExperimentConfig&)> ref) {
  return {key,
          [ref, key](ExperimentConfig& c, const std::string& v) { ref(c) = static_cast<Int>(parse_count(v, key)); },
          [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); }};
}

inline Field flag(std::string key, std::function<bool&(ExperimentConfig&)> ref) {
  return {key, [ref, key](ExperimentConfig& c, const std::string& v) { ref(c) = parse_bool(v, key); },
          [ref](const ExperimentConfig& c) { return ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false"; }};
}

inline Field index_list(std::string key, std::function<std::vector<Eigen::Index>&(ExperimentConfig&)> ref) {
  return {key,
          [ref, key](ExperimentConfig& c, const std::string& v) {
            std::vector<Eigen::Index> out;
            for (const auto& s : split_list(v)) out.push_back(static_cast<Eigen::Index>(parse_count(s, key)));
            ref(c) = out;
          },
          [ref](const ExperimentConfig& c) { return "(" + fmt_list(ref(const_cast<ExperimentConfig&>(c))) + ")"; }};
}

/// Qubit bath resonance: a number, or "resonant" for the gap at u = 0 (cold)
/// and u = 1/2 (hot).
inline Field qubit_omega(std::string key, sim::Bath b) {
  return {key,
          [key, b](ExperimentConfig& c, const std::string& v) {
            auto& q = qubit(c);
            if (trim(v) == "resonant")
              q[b].omega = q.gap(b == sim::Bath::Cold ? 0.0 : 0.5);
            else
              q[b].omega = parse_number(v, key);
          },
          [b](const ExperimentConfig& c) { return fmt(std::get<sim::QubitModel>(c.env.model)[b].omega); }};
}

inline std::vector<Field> machine_fields(bool is_qubit) {
  using sim::Bath;
  std::vector<Field> f;
  if (is_qubit) {
    f.push_back(num("qubit.E0", [](ExperimentConfig& c) -> double& { return qubit(c).E0; }));
    f.push_back(num("qubit.delta", [](ExperimentConfig& c) -> double& { return qubit(c).Delta; }));
    for (Bath b : {Bath::Hot, Bath::Cold}) {
      const std::string s = b == Bath::Hot ? "hot" : "cold";
      f.push_back(num("qubit.g_" + s, [b](ExperimentConfig& c) -> double& { return qubit(c)[b].g; }));
      f.push_back(num("qubit.Q_" + s, [b](ExperimentConfig& c) -> double& { return qubit(c)[b].Q; }));
      f.push_back(qubit_omega("qubit.omega_" + s, b));
      f.push_back(num("qubit.beta_" + s, [b](ExperimentConfig& c) -> double& { return qubit(c)[b].beta; }));
    }
  } else {
    f.push_back(num("oscillator.m", [](ExperimentConfig& c) -> double& { return oscillator(c).m; }));
    f.push_back(num("oscillator.w0", [](ExperimentConfig& c) -> double& { return oscillator(c).w0; }));
    for (Bath b : {Bath::Hot, Bath::Cold}) {
      const std::string s = b == Bath::Hot ? "hot" : "cold";
      f.push_back(num("oscillator.Gamma_" + s, [b](ExperimentConfig& c) -> double& { return oscillator(c)[b].Gamma; }));
      f.push_back(num("oscillator.beta_" + s, [b](ExperimentConfig& c) -> double& { return oscillator(c)[b].beta; }));
    }
    f.push_back(count<int>("oscillator.n_fock", [](ExperimentConfig& c) -> int& { return oscillator(c).n_fock; }));
  }
  return f;
}

inline std::vector<Field> common_fields() {
  using C = ExperimentConfig;
  std::vector<Field> f;
  // Environment.
  f.push_back(num("env.u_min", [](C& c) -> double& { return c.env.u_min; }));
  f.push_back(num("env.u_max", [](C& c) -> double& { return c.env.u_max; }));
  f.push_back(count<std::size_t>("env.history_length", [](C& c) -> std::size_t& { return c.env.history_length; }));
  f.push_back(num("env.dt", [](C& c) -> double& { return c.env.dt; }));
  f.push_back(num("env.gamma", [](C& c) -> double& { return c.env.gamma; }));
  f.push_back(num("env.P0", [](C& c) -> double& { return c.env.P0; }));
  f.push_back(num("env.Sigma0", [](C& c) -> double& { return c.env.Sigma0; }));
  f.push_back({"env.discrete",
               [](C& c, const std::string& v) {
                 std::vector<Coupling> d;
                 for (const auto& s : split_list(v)) d.push_back(parse_coupling(s, "env.discrete"));
                 c.env.discrete = d;
               },
               [](const C& c) {
                 std::string s = "(";
                 for (std::size_t i = 0; i < c.env.discrete.size(); ++i)
                   s += (i ? ", " : "") + std::string(sim::to_string(c.env.discrete[i]));
                 return s + ")";
               }});
  f.push_back(flag("env.penalty.enabled", [](C& c) -> bool& { return c.env.penalty.enabled; }));
  f.push_back(count<int>("env.penalty.min_count", [](C& c) -> int& { return c.env.penalty.min_count; }));
  f.push_back(num("env.penalty.magnitude", [](C& c) -> double& { return c.env.penalty.magnitude; }));
  f.push_back(count<std::size_t>("env.penalty.window", [](C& c) -> std::size_t& { return c.env.penalty.window; }));
  f.push_back(count<int>("env.n_sub", [](C& c) -> int& { return c.env.n_sub; }));
  f.push_back(count<int>("env.positivity_every", [](C& c) -> int& { return c.env.positivity_every; }));
  f.push_back(count<int>("env.coherence_every", [](C& c) -> int& { return c.env.coherence_every; }));

  // Agent.
  f.push_back(index_list("agent.conv_channels", [](C& c) -> std::vector<Eigen::Index>& { return c.agent.conv_channels; }));
  f.push_back(index_list("agent.policy_hidden", [](C& c) -> std::vector<Eigen::Index>& { return c.agent.policy_hidden; }));
  f.push_back(index_list("agent.critic_hidden", [](C& c) -> std::vector<Eigen::Index>& { return c.agent.critic_hidden; }));
  f.push_back(num("agent.log_sigma_min", [](C& c) -> double& { return c.agent.log_sigma_min; }));
  f.push_back(num("agent.log_sigma_max", [](C& c) -> double& { return c.agent.log_sigma_max; }));
  f.push_back(count<std::size_t>("agent.batch_size", [](C& c) -> std::size_t& { return c.agent.batch_size; }));
  f.push_back(count<std::size_t>("agent.buffer_capacity", [](C& c) -> std::size_t& { return c.agent.buffer_capacity; }));
  f.push_back(num("agent.lr", [](C& c) -> double& { return c.agent.lr; }));
  f.push_back(num("agent.polyak", [](C& c) -> double& { return c.agent.polyak; }));
  f.push_back(num("agent.temperature_lr", [](C& c) -> double& { return c.agent.temperature_lr; }));
  f.push_back(num("agent.initial_alpha_c", [](C& c) -> double& { return c.agent.initial_alpha_c; }));
  f.push_back(num("agent.initial_alpha_d", [](C& c) -> double& { return c.agent.initial_alpha_d; }));
  f.push_back(count<std::uint64_t>("agent.total_steps", [](C& c) -> std::uint64_t& { return c.agent.total_steps; }));
  f.push_back(count<std::uint64_t>("agent.random_steps", [](C& c) -> std::uint64_t& { return c.agent.random_steps; }));
  f.push_back(count<std::uint64_t>("agent.first_update", [](C& c) -> std::uint64_t& { return c.agent.first_update; }));
  f.push_back(count<std::uint64_t>("agent.n_updates", [](C& c) -> std::uint64_t& { return c.agent.n_updates; }));
  f.push_back(count<std::uint64_t>("agent.log_every", [](C& c) -> std::uint64_t& { return c.agent.log_every; }));
  f.push_back(count<std::uint64_t>("agent.checkpoint_every", [](C& c) -> std::uint64_t& { return c.agent.checkpoint_every; }));
  f.push_back(num("agent.entropy_c.start", [](C& c) -> double& { return c.agent.entropy_c.start; }));
  f.push_back(num("agent.entropy_c.end", [](C& c) -> double& { return c.agent.entropy_c.end; }));
  f.push_back(num("agent.entropy_c.decay", [](C& c) -> double& { return c.agent.entropy_c.decay; }));
  f.push_back(num("agent.entropy_d.start", [](C& c) -> double& { return c.agent.entropy_d.start; }));
  f.push_back(num("agent.entropy_d.end", [](C& c) -> double& { return c.agent.entropy_d.end; }));
  f.push_back(num("agent.entropy_d.decay", [](C& c) -> double& { return c.agent.entropy_d.decay; }));
  f.push_back(flag("agent.c.anneal", [](C& c) -> bool& { return c.anneal_c; }));
  f.push_back(num("agent.c.start", [](C& c) -> double& { return c.c_start; }));
  f.push_back(num("agent.c.mean", [](C& c) -> double& { return c.c_mean; }));
  f.push_back(num("agent.c.decay", [](C& c) -> double& { return c.c_decay; }));

  // Baselines.
  f.push_back(flag("baseline.trapezoid", [](C& c) -> bool& { return c.baseline.trapezoid; }));
  f.push_back(flag("baseline.otto", [](C& c) -> bool& { return c.baseline.otto; }));
  f.push_back(num("baseline.rel_tol", [](C& c) -> double& { return c.baseline.rel_tol; }));
  f.push_back(count<int>("baseline.max_periods", [](C& c) -> int& { return c.baseline.max_periods; }));
  f.push_back(num("baseline.trapezoid.period_min", [](C& c) -> double& { return c.baseline.trap.period_min; }));
  f.push_back(num("baseline.trapezoid.period_max", [](C& c) -> double& { return c.baseline.trap.period_max; }));
  f.push_back(count<int>("baseline.trapezoid.grid", [](C& c) -> int& { return c.baseline.trap.grid; }));
  f.push_back(count<int>("baseline.trapezoid.golden_iterations", [](C& c) -> int& { return c.baseline.trap.golden_iterations; }));
  f.push_back(num("baseline.trapezoid.a", [](C& c) -> double& { return c.baseline.trap.smoothing; }));
  f.push_back(count<int>("baseline.otto.grid", [](C& c) -> int& { return c.baseline.otto_opt.grid; }));
  f.push_back(num("baseline.otto.t_min", [](C& c) -> double& { return c.baseline.otto_opt.t_min; }));
  f.push_back(num("baseline.otto.t_max", [](C& c) -> double& { return c.baseline.otto_opt.t_max; }));
  f.push_back(num("baseline.otto.floor", [](C& c) -> double& { return c.baseline.otto_opt.floor; }));
  f.push_back(count<int>("baseline.otto.grid_n_fock", [](C& c) -> int& { return c.baseline.otto_opt.grid_n_fock; }));
  f.push_back(num("baseline.otto.grid_rel_tol", [](C& c) -> double& { return c.baseline.otto_opt.grid_rel_tol; }));
  f.push_back(count<int>("baseline.otto.newton_iterations", [](C& c) -> int& { return c.baseline.otto_opt.newton_iterations; }));
  f.push_back(num("baseline.otto.fd_step", [](C& c) -> double& { return c.baseline.otto_opt.fd_step; }));
  f.push_back(num("baseline.otto.polish_factor", [](C& c) -> double& { return c.baseline.otto_opt.polish_factor; }));
  f.push_back(count<int>("baseline.otto.polish_rounds", [](C& c) -> int& { return c.baseline.otto_opt.polish_rounds; }));

  // Cycle extraction.
  f.push_back(count<std::uint64_t>("extract.warmup", [](C& c) -> std::uint64_t& { return c.extract.warmup; }));
  f.push_back(count<std::uint64_t>("extract.window", [](C& c) -> std::uint64_t& { return c.extract.window; }));
  f.push_back(num("extract.stability", [](C& c) -> double& { return c.extract.stability; }));
  f.push_back(count<int>("extract.max_windows", [](C& c) -> int& { return c.extract.max_windows; }));
  f.push_back(num("extract.min_correlation", [](C& c) -> double& { return c.extract.min_correlation; }));
  f.push_back(flag("extract.record_coherence", [](C& c) -> bool& { return c.extract.record_coherence; }));

  // Sweep.
  f.push_back({"sweep.seeds",
               [](C& c, const std::string& v) {
                 c.seeds.clear();
                 for (const auto& s : split_list(v)) c.seeds.push_back(parse_count(s, "sweep.seeds"));
               },
               [](const C& c) { return "(" + fmt_list(c.seeds) + ")"; }});
  f.push_back({"sweep.c",
               [](C& c, const std::string& v) {
                 c.c_values.clear();
                 for (const auto& s : split_list(v)) c.c_values.push_back(parse_number(s, "sweep.c"));
               },
               [](const C& c) { return "(" + fmt_list(c.c_values) + ")"; }});
  f.push_back({"sweep.output_dir", [](C& c, const std::string& v) { c.output_dir = trim(v); },
               [](const C& c) { return c.output_dir; }});
  f.push_back(flag("sweep.rerun_failed", [](C& c) -> bool& { return c.rerun_failed; }));
  f.push_back(count<std::uint64_t>("sweep.rerun_seed_offset", [](C& c) -> std::uint64_t& { return c.rerun_seed_offset; }));
  return f;
}

inline std::vector<Field> all_fields(bool is_qubit) {
  auto f = machine_fields(is_qubit);
  auto g = common_fields();
  f.insert(f.end(), g.begin(), g.end());
  return f;
}

}  // namespace detail

/// Defaults for a machine: the environment preset and the matching agent
/// hyperparameters.
inline ExperimentConfig default_config(const std::string& machine) {
  ExperimentConfig c;
  c.machine = machine;
  if (machine == "qubit_refrigerator") {
    c.env = env::qubit_refrigerator_preset();
    c.agent = sac::qubit_sac_preset(1.0);
    c.anneal_c = true;
    c.c_start = 1.0;
    c.c_mean = 170000.0;
    c.c_decay = 20000.0;
  } else if (machine == "oscillator_engine") {
    c.env = env::oscillator_engine_preset();
    c.agent = sac::oscillator_sac_preset(1.0);
    c.anneal_c = false;
    c.baseline.trapezoid = false;
  } else {
    throw ConfigError("machine: expected qubit_refrigerator or oscillator_engine, got '" + machine + "'");
  }
  return c;
}

inline void validate(const ExperimentConfig& c) {
  try {
    c.env.validate();
    c.agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
  if (c.c_values.empty()) throw ConfigError("sweep.c must not be empty");
  for (double v : c.c_values)
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("sweep.c values must lie in [0, 1]");
  if (!(c.c_start >= 0.0 && c.c_start <= 1.0)) throw ConfigError("agent.c.start must lie in [0, 1]");
  if (c.anneal_c && !(c.c_decay > 0.0)) throw ConfigError("agent.c.decay must be positive");
  if (c.extract.window < 4) throw ConfigError("extract.window must be at least 4");
  if (c.extract.max_windows < 1) throw ConfigError("extract.max_windows must be at least 1");
  if (!(c.extract.stability > 0.0)) throw ConfigError("extract.stability must be positive");
  if (c.baseline.trapezoid && !c.env.is_qubit())
    throw ConfigError("baseline.trapezoid applies to the qubit refrigerator only");
  if (c.baseline.max_periods < 2) throw ConfigError("baseline.max_periods must be at least 2");
  if (c.output_dir.empty()) throw ConfigError("sweep.output_dir must not be empty");
}

/// Parses `key = value` lines. `#` starts a comment; `machine` must come
/// before any machine-specific key and resets all values to that machine's
/// defaults. Unknown or repeated keys are errors. `overrides` are applied
/// after the file entries and may repeat file keys.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::string machine = "qubit_refrigerator";
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (seen.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    if (key == "machine") {
      if (!entries.empty()) throw ConfigError("line " + std::to_string(lineno) + ": machine must be the first key");
      machine = value;
      continue;
    }
    entries.emplace_back(key, value);
  }
  ExperimentConfig cfg = default_config(machine);
  const auto fields = detail::all_fields(cfg.env.is_qubit());
  std::map<std::string, const detail::Field*> by_key;
  for (const auto& f : fields) by_key[f.key] = &f;
  for (const auto& [k, v] : entries) {
    const auto it = by_key.find(k);
    if (it == by_key.end()) throw ConfigError("line " + std::to_string(seen[k]) + ": unknown key '" + k + "'");
    try {
      it->second->set(cfg, v);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(seen[k]) + ": " + e.what());
    }
  }
  for (const auto& [k, v] : overrides) {
    if (k == "machine") throw ConfigError("override: machine cannot be overridden");
    const auto it = by_key.find(k);
    if (it == by_key.end()) throw ConfigError("override: unknown key '" + k + "'");
    try {
      it->second->set(cfg, v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("override: ") + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides);
}

/// Canonical text with every key resolved; parsing it reproduces the config.
inline std::string format_config(const ExperimentConfig& cfg) {
  std::string out = "machine = " + cfg.machine + "\n";
  for (const auto& f : detail::all_fields(cfg.env.is_qubit())) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// FNV-1a over the canonical text, as 16 hex digits. The output directory
/// is left out: it names where results go, not what they are.
inline std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.output_dir = "-";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qtm::pareto
