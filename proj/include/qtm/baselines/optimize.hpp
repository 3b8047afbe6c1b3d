#pragma once

#include "qtm/baselines/evaluate.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace qtm::baselines {

inline std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi and n >= 2");
  std::vector<double> g(static_cast<std::size_t>(n));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (n - 1));
  return g;
}

struct TrapezoidOptions {
  double period_min = 0.0;  ///< 0 picks 4 dt
  double period_max = 2000.0;
  int grid = 32;
  int golden_iterations = 40;
  double smoothing = 2.0;
  EvalOptions eval;
};

struct TrapezoidResult {
  double omega = 0.0;
  CycleMetrics metrics;
  double grid_best_return = 0.0;
  std::vector<double> grid_omega;
  std::vector<double> grid_return;
};

/// Logarithmic scan over the frequency, then golden-section refinement in
/// log(omega) between the neighbours of the best grid point.
inline TrapezoidResult optimize_trapezoid(const env::EnvConfig& cfg, double c, const TrapezoidOptions& opt = {}) {
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("optimize_trapezoid: need 0 <= c <= 1");
  const double dt = cfg.dt;
  const double t_min = opt.period_min > 0.0 ? opt.period_min : 4.0 * dt;
  const auto periods = log_grid(t_min, opt.period_max, opt.grid);
  auto eval = [&](double omega) { return evaluate_cycle(CycleSpec::trapezoid(omega, opt.smoothing), cfg, dt, c, opt.eval); };

  TrapezoidResult res;
  std::size_t best = 0;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const double w = 2.0 * std::numbers::pi / periods[i];
    res.grid_omega.push_back(w);
    res.grid_return.push_back(eval(w).ret);
    if (res.grid_return[i] > res.grid_return[best]) best = i;
  }
  res.grid_best_return = res.grid_return[best];
  res.omega = res.grid_omega[best];
  res.metrics = eval(res.omega);

  double lo = std::log(res.grid_omega[std::min(best + 1, periods.size() - 1)]);
  double hi = std::log(res.grid_omega[best == 0 ? 0 : best - 1]);
  if (hi > lo) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    CycleMetrics m1 = eval(std::exp(x1)), m2 = eval(std::exp(x2));
    for (int it = 0; it < opt.golden_iterations; ++it) {
      if (m1.ret >= m2.ret) {
        hi = x2;
        x2 = x1;
        m2 = m1;
        x1 = hi - r * (hi - lo);
        m1 = eval(std::exp(x1));
      } else {
        lo = x1;
        x1 = x2;
        m1 = m2;
        x2 = lo + r * (hi - lo);
        m2 = eval(std::exp(x2));
      }
    }
    const bool first = m1.ret >= m2.ret;
    const CycleMetrics& m = first ? m1 : m2;
    if (m.ret > res.metrics.ret) {
      res.metrics = m;
      res.omega = std::exp(first ? x1 : x2);
    }
  }
  return res;
}

struct OttoOptions {
  int grid = 6;
  double t_min = 0.0;  ///< 0 picks dt
  double t_max = 0.0;  ///< 0 picks 50 / Gamma
  double floor = 1e-3; ///< smallest admissible stroke duration
  int grid_n_fock = 64;  ///< Fock dimension for the coarse grid; 0 keeps the model's
  double grid_rel_tol = 1e-6;
  int newton_iterations = 12;
  double fd_step = 0.02;  ///< finite-difference step in log(duration)
  double polish_factor = 0.05;
  int polish_rounds = 60;
  double u_hot = std::numeric_limits<double>::quiet_NaN();   ///< default u_max
  double u_cold = std::numeric_limits<double>::quiet_NaN();  ///< default u_min
  EvalOptions eval;
};

struct OttoResult {
  std::array<double, 4> durations{};
  CycleMetrics metrics;
  double grid_best_return = std::numeric_limits<double>::quiet_NaN();
  int newton_steps = 0;
  bool newton_failed = false;  ///< Newton stalled and coordinate search took over
  int polish_moves = 0;
  int evaluations = 0;
};

/// Stroke couplings of the Otto cycle for the configured machine.
inline std::array<Coupling, 4> otto_baths(const env::EnvConfig& cfg) {
  if (cfg.is_qubit()) return {Coupling::Both, Coupling::Both, Coupling::Both, Coupling::Both};
  return {Coupling::Hot, Coupling::None, Coupling::Cold, Coupling::None};
}

/// Relaxation time scale used for the duration grid.
inline double otto_time_scale(const env::EnvConfig& cfg) {
  if (cfg.is_qubit()) {
    const auto& m = std::get<sim::QubitModel>(cfg.model);
    double g = std::numeric_limits<double>::infinity();
    for (sim::Bath b : {sim::Bath::Hot, sim::Bath::Cold}) {
      // Rate at the bath's own resonance.
      const double u = b == sim::Bath::Cold ? 0.0 : 0.5;
      const auto r = sim::qubit_rates(m, b, u);
      g = std::min(g, r.up + r.down);
    }
    return 1.0 / g;
  }
  const auto& m = std::get<sim::OscillatorModel>(cfg.model);
  return 1.0 / std::min(m[sim::Bath::Hot].Gamma, m[sim::Bath::Cold].Gamma);
}

namespace detail {

class OttoObjective {
 public:
  OttoObjective(const env::EnvConfig& cfg, double c, const OttoOptions& opt, bool coarse)
      : cfg_(cfg), c_(c), opt_(opt), eval_(opt.eval) {
    u_hot_ = std::isnan(opt.u_hot) ? cfg.u_max : opt.u_hot;
    u_cold_ = std::isnan(opt.u_cold) ? cfg.u_min : opt.u_cold;
    if (coarse) {
      if (!cfg_.is_qubit() && opt.grid_n_fock > 0)
        std::get<sim::OscillatorModel>(cfg_.model).n_fock = opt.grid_n_fock;
      eval_.rel_tol = opt.grid_rel_tol;
    }
    eval_.cache = &cache_;
    eval_.throw_on_nonconvergence = false;
  }

  CycleSpec spec(const std::array<double, 4>& t) const {
    return CycleSpec::otto(t, u_hot_, u_cold_, otto_baths(cfg_));
  }

  /// Non-converged or failing points score -inf.
  CycleMetrics metrics(const std::array<double, 4>& t) {
    ++count_;
    try {
      return evaluate_cycle(spec(t), cfg_, cfg_.dt, c_, eval_);
    } catch (const sim::SimulationError&) {
      CycleMetrics bad;
      bad.ret = -std::numeric_limits<double>::infinity();
      return bad;
    }
  }

  double operator()(const std::array<double, 4>& t) {
    const CycleMetrics m = metrics(t);
    return m.converged ? m.ret : -std::numeric_limits<double>::infinity();
  }

  std::array<double, 4> clamp(std::array<double, 4> t) const {
    for (double& x : t) x = std::max(x, opt_.floor);
    return t;
  }

  int count() const { return count_; }

 private:
  env::EnvConfig cfg_;
  double c_;
  OttoOptions opt_;
  EvalOptions eval_;
  RampCache cache_;
  double u_hot_ = 0.0, u_cold_ = 0.0;
  int count_ = 0;
};

}  // namespace detail

/// 4-D logarithmic grid over the stroke durations.
inline OttoResult otto_grid_search(const env::EnvConfig& cfg, double c, const OttoOptions& opt = {}) {
  detail::OttoObjective f(cfg, c, opt, true);
  const double lo = opt.t_min > 0.0 ? opt.t_min : cfg.dt;
  const double hi = opt.t_max > 0.0 ? opt.t_max : 50.0 * otto_time_scale(cfg);
  const auto g = log_grid(lo, hi, opt.grid);
  OttoResult res;
  double best = -std::numeric_limits<double>::infinity();
  for (double a : g)
    for (double b : g)
      for (double cc : g)
        for (double d : g) {
          // Loop order keeps ramp durations (b, d) slow-varying so cached ramps are reused.
          const std::array<double, 4> t{cc, b, d, a};
          const double v = f(t);
          if (v > best) {
            best = v;
            res.durations = t;
          }
        }
  res.grid_best_return = best;
  res.evaluations = f.count();
  return res;
}

/// Damped Newton in log-durations with finite-difference derivatives and
/// step halving, falling back to coordinate search when Newton stalls; then
/// multiplicative coordinate polishing until no single-stroke change by the
/// polish factor improves the return.
inline OttoResult refine_otto(const env::EnvConfig& cfg, double c, std::array<double, 4> start,
                              const OttoOptions& opt = {}) {
  detail::OttoObjective f(cfg, c, opt, false);
  OttoResult res;
  using V4 = Eigen::Vector4d;
  auto to_t = [&](const V4& x) {
    std::array<double, 4> t{};
    for (int i = 0; i < 4; ++i) t[static_cast<std::size_t>(i)] = std::exp(x(i));
    return f.clamp(t);
  };
  auto to_x = [&](const std::array<double, 4>& t) {
    V4 x;
    for (int i = 0; i < 4; ++i) x(i) = std::log(t[static_cast<std::size_t>(i)]);
    return x;
  };
  start = f.clamp(start);
  V4 x = to_x(start);
  double fx = f(to_t(x));
  const double h = opt.fd_step;

  for (int it = 0; it < opt.newton_iterations; ++it) {
    V4 g;
    Eigen::Matrix4d hess;
    std::array<double, 4> fp{}, fm{};
    bool finite = std::isfinite(fx);
    for (int i = 0; i < 4 && finite; ++i) {
      V4 e = V4::Zero();
      e(i) = h;
      fp[static_cast<std::size_t>(i)] = f(to_t(x + e));
      fm[static_cast<std::size_t>(i)] = f(to_t(x - e));
      g(i) = (fp[static_cast<std::size_t>(i)] - fm[static_cast<std::size_t>(i)]) / (2 * h);
      hess(i, i) = (fp[static_cast<std::size_t>(i)] - 2 * fx + fm[static_cast<std::size_t>(i)]) / (h * h);
      finite = std::isfinite(g(i)) && std::isfinite(hess(i, i));
    }
    for (int i = 0; i < 4 && finite; ++i)
      for (int j = i + 1; j < 4; ++j) {
        V4 ei = V4::Zero(), ej = V4::Zero();
        ei(i) = h;
        ej(j) = h;
        const double v = (f(to_t(x + ei + ej)) - f(to_t(x + ei - ej)) - f(to_t(x - ei + ej)) + f(to_t(x - ei - ej))) /
                         (4 * h * h);
        hess(i, j) = hess(j, i) = v;
        finite = finite && std::isfinite(v);
      }
    bool improved = false;
    if (finite) {
      const Eigen::LLT<Eigen::Matrix4d> llt(-hess);
      if (llt.info() == Eigen::Success) {
        V4 step = llt.solve(g);
        // Damping keeps the first trial step within a factor e per stroke.
        const double len = step.cwiseAbs().maxCoeff();
        if (len > 1.0) step /= len;
        for (int k = 0; k < 10 && !improved; ++k, step *= 0.5) {
          const double v = f(to_t(x + step));
          if (v > fx) {
            x = to_x(to_t(x + step));
            fx = v;
            improved = true;
          }
        }
      }
    }
    if (!improved) {
      res.newton_failed = true;
      break;
    }
    ++res.newton_steps;
  }

  // Coordinate search: shrinking multiplicative steps, ending at the polish factor.
  std::array<double, 4> t = to_t(x);
  std::vector<double> factors{opt.polish_factor};
  if (res.newton_failed) factors = {0.5, 0.2, opt.polish_factor};
  for (double q : factors) {
    for (int round = 0; round < opt.polish_rounds; ++round) {
      bool moved = false;
      for (std::size_t i = 0; i < 4; ++i)
        for (double s : {1.0 + q, 1.0 - q}) {
          std::array<double, 4> trial = t;
          trial[i] = std::max(t[i] * s, opt.floor);
          if (trial[i] == t[i]) continue;
          const double v = f(trial);
          if (v > fx) {
            t = trial;
            fx = v;
            moved = true;
            ++res.polish_moves;
          }
        }
      if (!moved) break;
    }
  }
  res.durations = t;
  EvalOptions final_opt = opt.eval;
  res.metrics = evaluate_cycle(f.spec(t), cfg, cfg.dt, c, final_opt);
  res.evaluations = f.count() + 1;
  return res;
}

/// Grid search followed by refinement.
inline OttoResult optimize_otto(const env::EnvConfig& cfg, double c, const OttoOptions& opt = {}) {
  const OttoResult grid = otto_grid_search(cfg, c, opt);
  OttoResult res = refine_otto(cfg, c, grid.durations, opt);
  res.grid_best_return = grid.grid_best_return;
  res.evaluations += grid.evaluations;
  return res;
}

/// Grid search at the first weight, then refinement at every weight, each
/// warm-started from the previous solution.
inline std::vector<OttoResult> optimize_otto_sweep(const env::EnvConfig& cfg, const std::vector<double>& cs,
                                                   const OttoOptions& opt = {}) {
  std::vector<OttoResult> out;
  if (cs.empty()) return out;
  out.push_back(optimize_otto(cfg, cs.front(), opt));
  for (std::size_t i = 1; i < cs.size(); ++i) out.push_back(refine_otto(cfg, cs[i], out.back().durations, opt));
  return out;
}

}  // namespace qtm::baselines
