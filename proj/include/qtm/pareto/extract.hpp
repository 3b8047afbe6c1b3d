#pragma once

#include "qtm/baselines/evaluate.hpp"
#include "qtm/pareto/config.hpp"
#include "qtm/pareto/csv.hpp"
#include "qtm/sac/trainer.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

namespace qtm::pareto {

using env::ControlAction;
using env::HistoryState;

using Policy = std::function<ControlAction(const HistoryState&)>;

/// Deterministic-policy trace over the measurement window.
struct CycleTrace {
  double dt = 0.0;
  std::uint64_t start_step = 0;  ///< environment step of the first recorded action
  std::vector<ControlAction> actions;
  std::vector<double> r_power;
  std::vector<double> r_sigma;
  std::vector<double> coherence;  ///< empty when not recorded
  std::optional<std::size_t> period;  ///< in steps
  double correlation = 0.0;  ///< autocorrelation at the detected period
  double mean_power = 0.0;   ///< window averages of r_P and r_Sigma
  double mean_sigma = 0.0;
  std::size_t averaged_steps = 0;
  int windows = 0;
  bool stable = false;

  /// One period of the trace as a control table, or nothing when aperiodic.
  std::vector<baselines::ControlStep> period_steps() const {
    std::vector<baselines::ControlStep> out;
    if (!period) return out;
    const std::size_t n = actions.size();
    for (std::size_t i = n - *period; i < n; ++i) out.push_back({actions[i].u, actions[i].d, dt});
    return out;
  }
};

struct PeriodEstimate {
  std::optional<std::size_t> period;
  double correlation = 0.0;
};

/// Period of a sampled signal from its autocorrelation: the shortest lag
/// whose local peak reaches 0.9 of the highest peak and min_correlation.
inline PeriodEstimate estimate_period(const std::vector<double>& x, double min_correlation = 0.5) {
  PeriodEstimate est;
  const std::size_t n = x.size();
  if (n < 4) return est;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (!(var > 1e-24 * (1.0 + mean * mean))) return est;
  const std::size_t max_lag = n / 2;
  std::vector<double> r(max_lag + 2, 0.0);
  for (std::size_t k = 1; k <= max_lag + 1 && k < n; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += (x[t] - mean) * (x[t + k] - mean);
    r[k] = s / (static_cast<double>(n - k) * var);
  }
  std::vector<std::size_t> peaks;
  double best = -1.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const bool left = k == 1 || r[k] >= r[k - 1];
    const bool right = r[k] >= r[k + 1];
    if (left && right && (k > 1 || r[1] > r[2])) {
      peaks.push_back(k);
      best = std::max(best, r[k]);
    }
  }
  if (peaks.empty() || best < min_correlation) return est;
  for (std::size_t k : peaks)
    if (r[k] >= 0.9 * best && r[k] >= min_correlation) {
      est.period = k;
      est.correlation = r[k];
      break;
    }
  return est;
}

/// Period of an action trace: from u(t), or from the discrete choice when u
/// is constant.
inline PeriodEstimate estimate_period(const std::vector<ControlAction>& acts, double min_correlation = 0.5) {
  std::vector<double> u;
  u.reserve(acts.size());
  for (const auto& a : acts) u.push_back(a.u);
  auto est = estimate_period(u, min_correlation);
  if (est.period) return est;
  std::vector<double> d;
  for (const auto& a : acts) d.push_back(static_cast<double>(a.d));
  return estimate_period(d, min_correlation);
}

/// Runs `policy` from the environment's reset state for the warm-up, then
/// for measurement windows until the window-averaged power changes by less
/// than the stability tolerance.
inline CycleTrace extract_cycle(const Policy& policy, env::EnvConfig cfg, const ExtractSettings& s) {
  if (s.record_coherence) cfg.coherence_every = 1;
  env::Environment env(cfg);
  for (std::uint64_t i = 0; i < s.warmup; ++i) env.step(policy(env.history()));

  CycleTrace tr;
  tr.dt = cfg.dt;
  tr.start_step = env.steps();
  double last = std::numeric_limits<double>::quiet_NaN();
  for (int w = 0; w < s.max_windows; ++w) {
    CycleTrace win;
    double sum_p = 0.0;
    for (std::uint64_t i = 0; i < s.window; ++i) {
      const auto o = env.step(policy(env.history()));
      win.actions.push_back(o.action);
      win.r_power.push_back(o.r_power);
      win.r_sigma.push_back(o.r_sigma);
      if (s.record_coherence) win.coherence.push_back(o.diag.coherence);
      sum_p += o.r_power;
    }
    const double mean_p = sum_p / static_cast<double>(s.window);
    win.dt = tr.dt;
    win.start_step = env.steps() - s.window;
    win.windows = w + 1;
    tr = std::move(win);
    if (w > 0 && std::abs(mean_p - last) <= s.stability * std::max({std::abs(mean_p), std::abs(last), 1e-12})) {
      tr.stable = true;
      break;
    }
    last = mean_p;
  }

  const auto est = estimate_period(tr.actions, s.min_correlation);
  tr.period = est.period;
  tr.correlation = est.correlation;
  const std::size_t n = tr.actions.size();
  const std::size_t used = tr.period ? (n / *tr.period) * *tr.period : n;
  tr.averaged_steps = used;
  double p = 0.0, q = 0.0;
  for (std::size_t i = n - used; i < n; ++i) {
    p += tr.r_power[i];
    q += tr.r_sigma[i];
  }
  tr.mean_power = p / static_cast<double>(used);
  tr.mean_sigma = q / static_cast<double>(used);
  return tr;
}

/// Deterministic policy of a trained agent.
inline Policy agent_policy(sac::SacAgent& agent) {
  return [&agent](const HistoryState& h) {
    std::mt19937_64 unused(0);
    return agent.act(h, false, unused);
  };
}

/// Loads a training checkpoint for `cfg` at weight c and extracts its cycle.
inline CycleTrace extract_cycle(const std::filesystem::path& checkpoint, const ExperimentConfig& cfg, double c) {
  sac::MachineTask task(cfg.env);
  sac::Trainer trainer(cfg.agent_for(c, 0), task);
  trainer.load_checkpoint(checkpoint);
  return extract_cycle(agent_policy(trainer.agent()), cfg.env, cfg.extract);
}

inline const char* kTraceCsvHeader = "step,t,u,d,r_P,r_Sigma,coherence";

inline void write_trace_csv(std::ostream& os, const CycleTrace& tr) {
  const auto old = os.precision(17);
  os << kTraceCsvHeader << '\n';
  for (std::size_t i = 0; i < tr.actions.size(); ++i) {
    const std::uint64_t step = tr.start_step + i;
    os << step << ',' << static_cast<double>(step) * tr.dt << ',' << tr.actions[i].u << ','
       << sim::to_string(tr.actions[i].d) << ',' << tr.r_power[i] << ',' << tr.r_sigma[i] << ',';
    if (!tr.coherence.empty() && !std::isnan(tr.coherence[i])) os << tr.coherence[i];
    os << '\n';
  }
  os.precision(old);
}

/// Reads a trace written by write_trace_csv. The period is re-estimated
/// from the controls; empty coherence cells read as NaN.
inline CycleTrace read_trace_csv(const std::filesystem::path& path, double min_correlation = 0.5) {
  const CsvTable t = read_csv(path);
  CycleTrace tr;
  if (t.rows.empty()) throw std::runtime_error("trace " + path.string() + " has no rows");
  tr.start_step = std::stoull(t.get(0, "step"));
  if (t.rows.size() > 1) tr.dt = t.number(1, "t") - t.number(0, "t");
  bool any_coherence = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    tr.actions.push_back({t.number(i, "u"), detail::parse_coupling(t.get(i, "d"), "d")});
    tr.r_power.push_back(t.number(i, "r_P"));
    tr.r_sigma.push_back(t.number(i, "r_Sigma"));
    const double coh = t.number(i, "coherence");
    any_coherence = any_coherence || !std::isnan(coh);
    tr.coherence.push_back(coh);
  }
  if (!any_coherence) tr.coherence.clear();
  const auto est = estimate_period(tr.actions, min_correlation);
  tr.period = est.period;
  tr.correlation = est.correlation;
  tr.averaged_steps = tr.period ? (tr.actions.size() / *tr.period) * *tr.period : tr.actions.size();
  return tr;
}

}  // namespace qtm::pareto
