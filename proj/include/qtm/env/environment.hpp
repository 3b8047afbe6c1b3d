#pragma once

#include "qtm/common/binary_io.hpp"
#include "qtm/env/history.hpp"
#include "qtm/sim/density_matrix.hpp"
#include "qtm/sim/oscillator.hpp"
#include "qtm/sim/qubit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace qtm::env {

enum class MachineKind { Refrigerator, HeatEngine };

inline const char* to_string(MachineKind k) { return k == MachineKind::Refrigerator ? "refrigerator" : "engine"; }

using MachineModel = std::variant<sim::QubitModel, sim::OscillatorModel>;

/// Shaping term for the engine: each bath used fewer than `min_count` times in
/// the last `window` actions costs magnitude * (min_count - N)/min_count.
struct PenaltyConfig {
  bool enabled = false;
  int min_count = 25;
  double magnitude = 1.4;
  std::size_t window = 128;
};

struct EnvConfig {
  MachineKind kind = MachineKind::Refrigerator;
  MachineModel model = sim::QubitModel{};
  double u_min = 0.0;
  double u_max = 0.75;
  std::size_t history_length = 128;
  double dt = 0.98;
  double gamma = 0.997;
  double P0 = 6.62e-4;
  double Sigma0 = 0.037;
  std::vector<Coupling> discrete{Coupling::Both};
  PenaltyConfig penalty;
  int n_sub = 0;               ///< qubit RK4 substeps; 0 picks the default
  int positivity_every = 1;    ///< eigenvalue check cadence in steps, 0 disables
  int coherence_every = 1;     ///< coherence diagnostic cadence in steps, 0 disables

  bool is_qubit() const { return std::holds_alternative<sim::QubitModel>(model); }
  double u_mid() const { return 0.5 * (u_min + u_max); }

  void validate() const {
    std::visit([](const auto& m) { m.validate(); }, model);
    if (!(u_min < u_max) || !std::isfinite(u_min) || !std::isfinite(u_max))
      throw std::invalid_argument("env: need finite u_min < u_max");
    if (!is_qubit() && !(u_min > 0.0)) throw std::invalid_argument("env: oscillator control must stay positive");
    if (history_length == 0 || (history_length & (history_length - 1)) != 0)
      throw std::invalid_argument("env: history length must be a power of two");
    if (!(dt > 0.0)) throw std::invalid_argument("env: dt must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("env: need 0 < gamma < 1");
    if (!(P0 > 0.0) || !(Sigma0 > 0.0)) throw std::invalid_argument("env: P0 and Sigma0 must be positive");
    if (discrete.empty()) throw std::invalid_argument("env: discrete set must not be empty");
    if (is_qubit() && (discrete.size() != 1 || discrete[0] != Coupling::Both))
      throw std::invalid_argument("env: the qubit couples to both baths permanently; discrete set must be {Both}");
    if (!is_qubit())
      for (Coupling c : discrete)
        if (c == Coupling::Both) throw std::invalid_argument("env: the oscillator couples one bath at a time");
    if (penalty.enabled && (penalty.min_count <= 0 || penalty.window == 0 || penalty.window > history_length))
      throw std::invalid_argument("env: penalty needs min_count > 0 and 0 < window <= history length");
  }

  /// Idle action used to fill the history at reset.
  ControlAction idle_action() const {
    const bool has_none = std::find(discrete.begin(), discrete.end(), Coupling::None) != discrete.end();
    return {u_mid(), has_none ? Coupling::None : discrete.front()};
  }

  int discrete_index(Coupling d) const {
    for (std::size_t i = 0; i < discrete.size(); ++i)
      if (discrete[i] == d) return static_cast<int>(i);
    return -1;
  }

  double beta(sim::Bath b) const {
    return std::visit([b](const auto& m) { return m[b].beta; }, model);
  }
};

inline double kappa_from_gamma(double dt, double gamma) {
  if (!(dt > 0.0) || !(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("kappa_from_gamma: bad arguments");
  return -std::log(gamma) / dt;
}

inline double gamma_from_kappa(double dt, double kappa) {
  if (!(dt > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("gamma_from_kappa: bad arguments");
  return std::exp(-kappa * dt);
}

inline double penalty(const HistoryState& h, const PenaltyConfig& p) {
  if (!p.enabled) return 0.0;
  double total = 0.0;
  for (sim::Bath b : {sim::Bath::Hot, sim::Bath::Cold}) {
    const int n = h.count_bath(b, p.window);
    if (n < p.min_count) total -= p.magnitude * static_cast<double>(p.min_count - n) / p.min_count;
  }
  return total;
}

inline double combined_reward(double c, double r_power, double r_sigma) { return c * r_power - (1.0 - c) * r_sigma; }

struct StepDiagnostics {
  double q_hot = 0.0;
  double q_cold = 0.0;
  double quench_work = 0.0;
  double internal_energy = 0.0;
  double coherence = std::numeric_limits<double>::quiet_NaN();
};

struct StepOutcome {
  ControlAction action;
  double r_power = 0.0;  ///< power reward, penalty included
  double r_sigma = 0.0;  ///< entropy reward, penalty subtracted
  double penalty = 0.0;
  StepDiagnostics diag;
};

/// Simulator state plus action history; everything needed to resume.
struct EnvSnapshot {
  sim::ComplexMatrix rho;
  double u_last = 0.0;
  std::uint64_t steps = 0;
  std::vector<ControlAction> history;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    reset();
  }

  const EnvConfig& config() const { return cfg_; }
  const HistoryState& history() const { return history_; }
  const sim::ComplexMatrix& rho() const { return rho_; }
  double u_last() const { return u_last_; }
  std::uint64_t steps() const { return steps_; }

  const HistoryState& reset() {
    const double u0 = cfg_.u_mid();
    const double beta_c = cfg_.beta(sim::Bath::Cold);
    if (cfg_.is_qubit()) {
      rho_ = sim::gibbs_state(sim::qubit_hamiltonian(std::get<sim::QubitModel>(cfg_.model), u0), beta_c);
    } else {
      rho_ = sim::oscillator_gibbs(std::get<sim::OscillatorModel>(cfg_.model), u0, beta_c);
    }
    u_last_ = u0;
    steps_ = 0;
    history_ = HistoryState(cfg_.history_length, cfg_.idle_action());
    return history_;
  }

  StepOutcome step(const ControlAction& a) {
    if (!(a.u >= cfg_.u_min && a.u <= cfg_.u_max)) throw std::out_of_range("env: control outside admissible range");
    if (cfg_.discrete_index(a.d) < 0) throw std::out_of_range("env: discrete action not in configured set");
    sim::StepChecks checks;
    checks.positivity = cfg_.positivity_every > 0 && (steps_ % static_cast<std::uint64_t>(cfg_.positivity_every)) == 0;
    sim::StepResult r;
    if (cfg_.is_qubit()) {
      const auto& m = std::get<sim::QubitModel>(cfg_.model);
      r = sim::qubit_evolve_step(rho_, m, a.u, a.d, u_last_, cfg_.dt, cfg_.n_sub, checks);
    } else {
      const auto& m = std::get<sim::OscillatorModel>(cfg_.model);
      r = sim::oscillator_evolve_step(rho_, m, a.u, a.d, u_last_, cfg_.dt, checks);
    }
    rho_ = std::move(r.rho_next);
    u_last_ = a.u;
    history_.push(a);

    StepOutcome out;
    out.action = a;
    const double power = cfg_.kind == MachineKind::Refrigerator ? r.q_cold : r.q_cold + r.q_hot;
    const double sigma = -cfg_.beta(sim::Bath::Cold) * r.q_cold - cfg_.beta(sim::Bath::Hot) * r.q_hot;
    out.penalty = penalty(history_, cfg_.penalty);
    out.r_power = power / (cfg_.dt * cfg_.P0) + out.penalty;
    out.r_sigma = sigma / (cfg_.dt * cfg_.Sigma0) - out.penalty;
    out.diag.q_hot = r.q_hot;
    out.diag.q_cold = r.q_cold;
    out.diag.quench_work = r.quench_work;
    out.diag.internal_energy = r.u_internal_after;
    if (cfg_.coherence_every > 0 && (steps_ % static_cast<std::uint64_t>(cfg_.coherence_every)) == 0)
      out.diag.coherence = coherence();
    ++steps_;
    return out;
  }

  /// Relative entropy of coherence of the current state in the eigenbasis of
  /// the Hamiltonian at the last control.
  double coherence() const {
    if (cfg_.is_qubit())
      return sim::relative_entropy_of_coherence(rho_,
                                                sim::qubit_hamiltonian(std::get<sim::QubitModel>(cfg_.model), u_last_));
    // The oscillator state is already stored in its instantaneous eigenbasis.
    const Eigen::VectorXd diag = rho_.diagonal().real();
    return std::max(0.0, sim::shannon_entropy(diag) - sim::von_neumann_entropy(rho_));
  }

  EnvSnapshot snapshot() const { return {rho_, u_last_, steps_, history_.to_vector()}; }

  void restore(const EnvSnapshot& s) {
    if (s.history.size() != cfg_.history_length) throw std::invalid_argument("env restore: history length mismatch");
    rho_ = s.rho;
    u_last_ = s.u_last;
    steps_ = s.steps;
    history_ = HistoryState(cfg_.history_length, cfg_.idle_action());
    for (const auto& a : s.history) history_.push(a);
  }

 private:
  EnvConfig cfg_;
  sim::ComplexMatrix rho_;
  double u_last_ = 0.0;
  std::uint64_t steps_ = 0;
  HistoryState history_;
};

inline void write_snapshot(std::ostream& os, const EnvSnapshot& s) {
  io::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(s.rho.rows()));
  for (Eigen::Index c = 0; c < s.rho.cols(); ++c)
    for (Eigen::Index r = 0; r < s.rho.rows(); ++r) {
      io::write_pod(os, s.rho(r, c).real());
      io::write_pod(os, s.rho(r, c).imag());
    }
  io::write_pod(os, s.u_last);
  io::write_pod(os, s.steps);
  io::write_pod<std::uint64_t>(os, s.history.size());
  for (const auto& a : s.history) {
    io::write_pod(os, a.u);
    io::write_pod(os, static_cast<std::uint8_t>(a.d));
  }
}

inline EnvSnapshot read_snapshot(std::istream& is) {
  EnvSnapshot s;
  const auto n = io::read_pod<std::uint64_t>(is);
  if (n == 0 || n > 4096) throw std::runtime_error("env snapshot: bad dimension");
  s.rho.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < s.rho.cols(); ++c)
    for (Eigen::Index r = 0; r < s.rho.rows(); ++r) {
      const double re = io::read_pod<double>(is);
      const double im = io::read_pod<double>(is);
      s.rho(r, c) = {re, im};
    }
  s.u_last = io::read_pod<double>(is);
  s.steps = io::read_pod<std::uint64_t>(is);
  const auto h = io::read_pod<std::uint64_t>(is);
  if (h > (1u << 20)) throw std::runtime_error("env snapshot: bad history length");
  s.history.resize(h);
  for (auto& a : s.history) {
    a.u = io::read_pod<double>(is);
    const auto d = io::read_pod<std::uint8_t>(is);
    if (d > 3) throw std::runtime_error("env snapshot: bad discrete action");
    a.d = static_cast<Coupling>(d);
  }
  return s;
}

/// Per-step CSV with columns step,u,d,r_P,r_Sigma,q_hot,q_cold,coherence.
class DiagnosticsLog {
 public:
  explicit DiagnosticsLog(std::ostream& os) : os_(os) {
    os_ << "step,u,d,r_P,r_Sigma,q_hot,q_cold,coherence\n";
    os_.precision(17);
  }

  void append(std::uint64_t step, const StepOutcome& o) {
    os_ << step << ',' << o.action.u << ',' << sim::to_string(o.action.d) << ',' << o.r_power << ',' << o.r_sigma
        << ',' << o.diag.q_hot << ',' << o.diag.q_cold << ',';
    if (!std::isnan(o.diag.coherence)) os_ << o.diag.coherence;
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

/// (1 - gamma) sum_j gamma^j r_j over a finite stream.
inline double discounted_average(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0, w = 1.0;
  for (double r : rewards) {
    acc += w * r;
    w *= gamma;
  }
  return (1.0 - gamma) * acc;
}

}  // namespace qtm::env
