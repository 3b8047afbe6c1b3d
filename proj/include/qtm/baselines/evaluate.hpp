#pragma once

#include "qtm/baselines/cycle.hpp"
#include "qtm/baselines/efficiency.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace qtm::baselines {

class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CycleMetrics {
  double period = 0.0;
  double power = 0.0;  ///< cooling power (refrigerator) or output power (engine)
  double sigma = 0.0;  ///< entropy production rate
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  double ret = 0.0;    ///< c P/P0 - (1 - c) Sigma/Sigma0
  double q_hot = 0.0;  ///< heat from the hot bath per period
  double q_cold = 0.0;
  bool converged = false;
  int periods = 0;
};

struct EvalOptions {
  double rel_tol = 1e-8;
  int max_periods = 10000;
  bool throw_on_nonconvergence = true;
  RampCache* cache = nullptr;
};

/// Repeats the period from the environment's reset state until the
/// per-period averages of P and Sigma change by less than rel_tol.
inline CycleMetrics evaluate_steps(const env::EnvConfig& cfg, const std::vector<ControlStep>& steps, double c,
                                   const EvalOptions& opt = {}) {
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("evaluate: need 0 <= c <= 1");
  const PeriodPropagator prop(cfg, steps, opt.cache);
  env::Environment fresh(cfg);
  sim::ComplexMatrix rho = fresh.rho();
  double u_prev = fresh.u_last();

  double period = 0.0;
  for (const auto& s : steps) period += s.dt;
  const double bh = cfg.beta(sim::Bath::Hot), bc = cfg.beta(sim::Bath::Cold);

  CycleMetrics m;
  m.period = period;
  double last_p = std::numeric_limits<double>::quiet_NaN(), last_s = last_p;
  // Scales below which a change counts as zero.
  const double p_floor = 1e-12 * cfg.P0, s_floor = 1e-12 * cfg.Sigma0;
  for (int k = 1; k <= opt.max_periods; ++k) {
    const auto h = prop.run(rho, u_prev);
    const double p = (cfg.kind == MachineKind::Refrigerator ? h.q_cold : h.q_cold + h.q_hot) / period;
    const double s = -(bc * h.q_cold + bh * h.q_hot) / period;
    m.periods = k;
    m.power = p;
    m.sigma = s;
    m.q_hot = h.q_hot;
    m.q_cold = h.q_cold;
    if (k > 1 && std::abs(p - last_p) <= opt.rel_tol * std::max({std::abs(p), std::abs(last_p), p_floor}) &&
        std::abs(s - last_s) <= opt.rel_tol * std::max({std::abs(s), std::abs(last_s), s_floor})) {
      m.converged = true;
      break;
    }
    last_p = p;
    last_s = s;
  }
  if (!m.converged && opt.throw_on_nonconvergence)
    throw NonConvergence("evaluate: no periodic steady state after " + std::to_string(opt.max_periods) + " periods");
  if (m.power > 0.0) m.efficiency = efficiency_from_power_entropy(m.power, m.sigma, cfg.kind, bh, bc);
  m.ret = c * m.power / cfg.P0 - (1.0 - c) * m.sigma / cfg.Sigma0;
  return m;
}

inline CycleMetrics evaluate_cycle(const CycleSpec& cycle, const env::EnvConfig& cfg, double dt_eval, double c,
                                   const EvalOptions& opt = {}) {
  return evaluate_steps(cfg, discretize(cycle, dt_eval), c, opt);
}

inline const char* kCycleCsvHeader = "c,kind,omega,t_hot,t_ramp_cold,t_cold,t_ramp_hot,period,power,sigma,efficiency,return,converged";

/// One CSV row: c, cycle parameters, P, Sigma, eta, return, convergence.
inline void write_cycle_row(std::ostream& os, double c, const CycleSpec& cy, const CycleMetrics& m) {
  const auto old = os.precision(17);
  const char* kind = cy.kind == CycleKind::Trapezoid ? "trapezoid" : cy.kind == CycleKind::Otto ? "otto" : "table";
  os << c << ',' << kind << ',';
  if (cy.kind == CycleKind::Trapezoid) os << cy.omega;
  os << ',';
  for (int i = 0; i < 4; ++i) {
    if (cy.kind == CycleKind::Otto) os << cy.durations[static_cast<std::size_t>(i)];
    os << ',';
  }
  os << m.period << ',' << m.power << ',' << m.sigma << ',';
  if (!std::isnan(m.efficiency)) os << m.efficiency;
  os << ',' << m.ret << ',' << (m.converged ? 1 : 0) << '\n';
  os.precision(old);
}

}  // namespace qtm::baselines
