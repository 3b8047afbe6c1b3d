#pragma once

#include "qtm/baselines/cycle.hpp"
#include "qtm/pareto/extract.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace qtm::pareto {

class AperiodicTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CoherenceOptions {
  /// Trapezoid span. By default the baseline profile in [0, 1/2] for the
  /// qubit and [u_min, u_max] otherwise; with match_trace the trace's own
  /// smallest and largest control.
  bool match_trace = false;
  int max_periods = 20000;
  double rel_tol = 1e-9;
};

struct CoherenceRow {
  double c = 0.0;
  std::size_t period_steps = 0;
  double rl = 0.0;         ///< time-averaged coherence of the traced cycle
  double trapezoid = 0.0;  ///< same for the trapezoid of equal period
  int trapezoid_periods = 0;
};

/// Trapezoid controls at the step midpoints of one period of `n` steps,
/// rescaled from [0, 1/2] to [lo, hi], with the bath choices of `baths`.
inline std::vector<ControlAction> equal_period_trapezoid(std::size_t n, double lo, double hi,
                                                         const std::vector<Coupling>& baths, double a = 2.0) {
  std::vector<ControlAction> out;
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double shape = 2.0 * baselines::trapezoid_u(static_cast<double>(k) + 0.5, omega, a);
    out.push_back({lo + (hi - lo) * shape, baths[k]});
  }
  return out;
}

/// Averages the step-end coherence of the traced cycle, and of a trapezoid
/// with the same period and bath schedule driven to its periodic steady
/// state.
inline CoherenceRow coherence_report(const CycleTrace& tr, env::EnvConfig cfg, double c,
                                     const CoherenceOptions& opt = {}) {
  if (!tr.period) throw AperiodicTrace("coherence report: trace has no detected period");
  if (tr.coherence.size() != tr.actions.size()) throw std::invalid_argument("coherence report: trace lacks coherence");
  const std::size_t p = *tr.period, n = tr.actions.size();
  CoherenceRow row;
  row.c = c;
  row.period_steps = p;
  const std::size_t used = (n / p) * p;
  double s = 0.0;
  for (std::size_t i = n - used; i < n; ++i) s += tr.coherence[i];
  row.rl = s / static_cast<double>(used);

  double lo = cfg.is_qubit() ? 0.0 : cfg.u_min, hi = cfg.is_qubit() ? 0.5 : cfg.u_max;
  std::vector<Coupling> baths;
  for (std::size_t i = n - p; i < n; ++i) baths.push_back(tr.actions[i].d);
  if (opt.match_trace) {
    lo = hi = tr.actions[n - p].u;
    for (std::size_t i = n - p; i < n; ++i) {
      lo = std::min(lo, tr.actions[i].u);
      hi = std::max(hi, tr.actions[i].u);
    }
  }
  const auto steps = equal_period_trapezoid(p, lo, hi, baths);
  cfg.coherence_every = 1;
  env::Environment env(cfg);
  double last_c = std::numeric_limits<double>::quiet_NaN(), last_p = last_c;
  for (int k = 1; k <= opt.max_periods; ++k) {
    double cs = 0.0, ps = 0.0;
    for (const auto& a : steps) {
      const auto o = env.step(a);
      cs += o.diag.coherence;
      ps += o.r_power;
    }
    cs /= static_cast<double>(p);
    ps /= static_cast<double>(p);
    row.trapezoid = cs;
    row.trapezoid_periods = k;
    if (k > 1 && std::abs(cs - last_c) <= opt.rel_tol * std::max(std::abs(cs), 1e-12) &&
        std::abs(ps - last_p) <= opt.rel_tol * std::max(std::abs(ps), 1e-12))
      break;
    last_c = cs;
    last_p = ps;
  }
  return row;
}

inline const char* kCoherenceCsvHeader = "c,period_steps,coherence_rl,coherence_trapezoid";

inline void write_coherence_row(std::ostream& os, const CoherenceRow& r) {
  const auto old = os.precision(17);
  os << r.c << ',' << r.period_steps << ',' << r.rl << ',' << r.trapezoid << '\n';
  os.precision(old);
}

}  // namespace qtm::pareto
