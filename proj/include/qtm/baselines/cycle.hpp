#pragma once

#include "qtm/env/environment.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace qtm::baselines {

using sim::Coupling;

/// One piecewise-constant control segment.
struct ControlStep {
  double u = 0.0;
  Coupling d = Coupling::Both;
  double dt = 0.0;
};

/// Smoothed trapezoid u(t) = (1 + tanh(a cos(omega t)) / tanh(a)) / 4.
inline double trapezoid_u(double t, double omega, double a = 2.0) {
  return 0.25 * (1.0 + std::tanh(a * std::cos(omega * t)) / std::tanh(a));
}

enum class CycleKind { Trapezoid, Otto, Table };

/// Stroke order of an Otto cycle.
enum OttoStroke : int { kHotIsochore = 0, kRampToCold = 1, kColdIsochore = 2, kRampToHot = 3 };

struct CycleSpec {
  CycleKind kind = CycleKind::Trapezoid;
  // trapezoid
  double omega = 0.1;
  double smoothing = 2.0;
  // otto
  std::array<double, 4> durations{1.0, 1.0, 1.0, 1.0};
  double u_hot = 1.0;
  double u_cold = 0.5;
  std::array<Coupling, 4> baths{Coupling::Hot, Coupling::None, Coupling::Cold, Coupling::None};
  // table
  std::vector<ControlStep> table;

  static CycleSpec trapezoid(double omega, double a = 2.0) {
    CycleSpec c;
    c.kind = CycleKind::Trapezoid;
    c.omega = omega;
    c.smoothing = a;
    return c;
  }

  static CycleSpec otto(std::array<double, 4> durations, double u_hot, double u_cold,
                        std::array<Coupling, 4> baths = {Coupling::Hot, Coupling::None, Coupling::Cold,
                                                         Coupling::None}) {
    CycleSpec c;
    c.kind = CycleKind::Otto;
    c.durations = durations;
    c.u_hot = u_hot;
    c.u_cold = u_cold;
    c.baths = baths;
    return c;
  }

  static CycleSpec from_table(std::vector<ControlStep> steps) {
    CycleSpec c;
    c.kind = CycleKind::Table;
    c.table = std::move(steps);
    return c;
  }

  void validate() const {
    switch (kind) {
      case CycleKind::Trapezoid:
        if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("cycle: omega must be positive");
        if (!(smoothing > 0.0)) throw std::invalid_argument("cycle: smoothing must be positive");
        break;
      case CycleKind::Otto:
        for (double t : durations)
          if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("cycle: stroke durations must be positive");
        break;
      case CycleKind::Table:
        if (table.empty()) throw std::invalid_argument("cycle: empty table");
        for (const auto& s : table)
          if (!(s.dt > 0.0)) throw std::invalid_argument("cycle: table steps need positive durations");
        break;
    }
  }

  double period() const {
    switch (kind) {
      case CycleKind::Trapezoid:
        return 2.0 * std::numbers::pi / omega;
      case CycleKind::Otto:
        return durations[0] + durations[1] + durations[2] + durations[3];
      case CycleKind::Table: {
        double t = 0.0;
        for (const auto& s : table) t += s.dt;
        return t;
      }
    }
    return 0.0;
  }
};

/// Piecewise-constant steps of one period. Trapezoids are sampled at step
/// midpoints with the largest step not exceeding dt; Otto ramps use that step
/// too, each substep holding the control reached at its end; isochores are
/// single steps since the control is constant.
inline std::vector<ControlStep> discretize(const CycleSpec& c, double dt) {
  c.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be positive");
  std::vector<ControlStep> out;
  auto substeps = [dt](double t) { return std::max<long>(1, static_cast<long>(std::ceil(t / dt - 1e-9))); };
  switch (c.kind) {
    case CycleKind::Trapezoid: {
      const double period = c.period();
      const long m = std::max<long>(2, substeps(period));
      const double h = period / static_cast<double>(m);
      for (long k = 0; k < m; ++k)
        out.push_back({trapezoid_u((static_cast<double>(k) + 0.5) * h, c.omega, c.smoothing), Coupling::Both, h});
      break;
    }
    case CycleKind::Otto: {
      out.push_back({c.u_hot, c.baths[kHotIsochore], c.durations[kHotIsochore]});
      auto ramp = [&](double from, double to, double t, Coupling d) {
        const long m = substeps(t);
        const double h = t / static_cast<double>(m);
        for (long k = 1; k <= m; ++k)
          out.push_back({from + (to - from) * static_cast<double>(k) / static_cast<double>(m), d, h});
      };
      ramp(c.u_hot, c.u_cold, c.durations[kRampToCold], c.baths[kRampToCold]);
      out.push_back({c.u_cold, c.baths[kColdIsochore], c.durations[kColdIsochore]});
      ramp(c.u_cold, c.u_hot, c.durations[kRampToHot], c.baths[kRampToHot]);
      break;
    }
    case CycleKind::Table:
      out = c.table;
      break;
  }
  return out;
}

/// Cache of composed ramp propagators keyed by the control sequence.
class RampCache {
 public:
  using Key = std::vector<double>;

  std::shared_ptr<const sim::ComplexMatrix> find(const Key& k) const {
    const auto it = map_.find(k);
    return it == map_.end() ? nullptr : it->second;
  }

  void insert(Key k, std::shared_ptr<const sim::ComplexMatrix> v) {
    if (map_.size() >= capacity_) map_.clear();
    map_.emplace(std::move(k), std::move(v));
  }

  std::size_t size() const { return map_.size(); }

 private:
  std::size_t capacity_ = 48;
  std::map<Key, std::shared_ptr<const sim::ComplexMatrix>> map_;
};

/// Propagates a single period repeatedly. Oscillator steps without bath
/// contact are folded into one unitary per run; consecutive constant-control
/// steps with the same bath are merged into a single exact step.
class PeriodPropagator {
 public:
  struct Heats {
    double q_hot = 0.0;
    double q_cold = 0.0;
  };

  PeriodPropagator(const env::EnvConfig& cfg, const std::vector<ControlStep>& steps, RampCache* cache = nullptr)
      : cfg_(cfg) {
    if (steps.empty()) throw std::invalid_argument("propagator: empty period");
    for (const auto& s : steps) {
      if (!(s.u >= cfg.u_min - 1e-12 && s.u <= cfg.u_max + 1e-12))
        throw std::out_of_range("propagator: control outside the admissible range");
      if (cfg.discrete_index(s.d) < 0) throw std::out_of_range("propagator: discrete action not in configured set");
      if (!(s.dt > 0.0)) throw std::invalid_argument("propagator: step durations must be positive");
    }
    compile(steps, cache);
  }

  /// Advances rho through one period starting from control u_prev, which
  /// on return holds the last control of the period.
  Heats run(sim::ComplexMatrix& rho, double& u_prev) const {
    Heats h;
    sim::StepChecks checks;
    checks.positivity = false;
    if (!cfg_.is_qubit() && u_prev != start_u_) {
      // Zero-duration switch to the control the compiled ramps assume.
      rho = sim::change_basis(rho, sim::overlap_matrix(u_prev, start_u_, static_cast<int>(rho.rows())));
      u_prev = start_u_;
    }
    for (const auto& b : blocks_) {
      if (b.unitary) {
        rho = apply_unitary(*b.unitary, rho);
        u_prev = b.u;
        continue;
      }
      sim::StepResult r;
      if (cfg_.is_qubit())
        r = sim::qubit_evolve_step(rho, std::get<sim::QubitModel>(cfg_.model), b.u, b.d, u_prev, b.dt, cfg_.n_sub,
                                   checks);
      else
        r = sim::oscillator_evolve_step(rho, std::get<sim::OscillatorModel>(cfg_.model), b.u, b.d, u_prev, b.dt,
                                        checks);
      rho = std::move(r.rho_next);
      h.q_hot += r.q_hot;
      h.q_cold += r.q_cold;
      u_prev = b.u;
    }
    return h;
  }

  std::size_t blocks() const { return blocks_.size(); }

 private:
  struct Block {
    double u = 0.0;
    Coupling d = Coupling::Both;
    double dt = 0.0;
    std::shared_ptr<const sim::ComplexMatrix> unitary;
  };

  void compile(const std::vector<ControlStep>& steps, RampCache* cache) {
    const bool osc = !cfg_.is_qubit();
    // The held control before the first step is the last one of the period.
    double prev = steps.back().u;
    start_u_ = prev;
    std::size_t i = 0;
    while (i < steps.size()) {
      if (osc && steps[i].d == Coupling::None) {
        std::size_t j = i;
        while (j < steps.size() && steps[j].d == Coupling::None) ++j;
        // The run starts with a switch from `prev`, so it is part of the key.
        RampCache::Key key{prev};
        for (std::size_t k = i; k < j; ++k) {
          key.push_back(steps[k].u);
          key.push_back(steps[k].dt);
        }
        std::shared_ptr<const sim::ComplexMatrix> v = cache ? cache->find(key) : nullptr;
        if (!v) {
          v = std::make_shared<const sim::ComplexMatrix>(ramp_unitary(prev, steps, i, j));
          if (cache) cache->insert(std::move(key), v);
        }
        blocks_.push_back({steps[j - 1].u, Coupling::None, 0.0, std::move(v)});
        prev = steps[j - 1].u;
        i = j;
        continue;
      }
      Block b{steps[i].u, steps[i].d, steps[i].dt, nullptr};
      std::size_t j = i + 1;
      while (j < steps.size() && steps[j].u == b.u && steps[j].d == b.d) b.dt += steps[j++].dt;
      blocks_.push_back(b);
      prev = b.u;
      i = j;
    }
  }

  /// V = prod_k P_k T_k^T for the steps [i, j), so rho -> V rho V^dagger.
  sim::ComplexMatrix ramp_unitary(double prev, const std::vector<ControlStep>& steps, std::size_t i,
                                  std::size_t j) const {
    const auto& m = std::get<sim::OscillatorModel>(cfg_.model);
    const int n = m.n_fock;
    sim::RealMatrix re = sim::RealMatrix::Identity(n, n), im = sim::RealMatrix::Zero(n, n);
    for (std::size_t k = i; k < j; ++k) {
      if (steps[k].u != prev) {
        const sim::RealMatrix tt = sim::overlap_matrix(prev, steps[k].u, n).transpose();
        re = (tt * re).eval();
        im = (tt * im).eval();
      }
      const double w = m.frequency(steps[k].u) * steps[k].dt;
      for (int r = 0; r < n; ++r) {
        const double c = std::cos(w * r), s = -std::sin(w * r);
        for (int col = 0; col < n; ++col) {
          const double a = re(r, col), b = im(r, col);
          re(r, col) = c * a - s * b;
          im(r, col) = c * b + s * a;
        }
      }
      prev = steps[k].u;
    }
    sim::ComplexMatrix v(n, n);
    v.real() = re;
    v.imag() = im;
    return v;
  }

  static sim::ComplexMatrix apply_unitary(const sim::ComplexMatrix& v, const sim::ComplexMatrix& rho) {
    sim::ComplexMatrix out = v * rho * v.adjoint();
    out = 0.5 * (out + out.adjoint()).eval();
    // Truncation loss is returned to the top level, as in a single basis change.
    const Eigen::Index top = out.rows() - 1;
    out(top, top) += rho.trace().real() - out.trace().real();
    return out;
  }

  env::EnvConfig cfg_;
  std::vector<Block> blocks_;
  double start_u_ = 0.0;
};

}  // namespace qtm::baselines
