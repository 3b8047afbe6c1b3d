#pragma once

#include "qtm/sim/common.hpp"
#include "qtm/sim/density_matrix.hpp"
#include "qtm/sim/rk4.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace qtm::sim {

/// Flux-tunable qubit H(u) = -E0 (Delta sigma_x + u sigma_z) coupled to two
/// resonant baths with Lorentzian noise spectra.
struct QubitModel {
  struct BathParams {
    double g = 1.0;      ///< coupling strength
    double Q = 4.0;      ///< quality factor
    double omega = 1.0;  ///< resonance frequency
    double beta = 1.0;   ///< inverse temperature
  };

  double E0 = 1.0;
  double Delta = 0.12;
  std::array<BathParams, 2> bath{};  ///< indexed by Bath

  const BathParams& operator[](Bath b) const { return bath[static_cast<int>(b)]; }
  BathParams& operator[](Bath b) { return bath[static_cast<int>(b)]; }

  /// Cold bath resonant with the gap at u = 0, hot bath with the gap at u = 1/2.
  static QubitModel with_resonances(double E0, double Delta, double g, double Q, double beta_hot, double beta_cold) {
    QubitModel m;
    m.E0 = E0;
    m.Delta = Delta;
    m[Bath::Hot] = {g, Q, 2.0 * E0 * std::sqrt(Delta * Delta + 0.25), beta_hot};
    m[Bath::Cold] = {g, Q, 2.0 * E0 * Delta, beta_cold};
    m.validate();
    return m;
  }

  void validate() const {
    if (!(E0 > 0.0) || !std::isfinite(E0)) throw InvalidModel("qubit: E0 must be positive");
    if (!(Delta > 0.0) || !std::isfinite(Delta)) throw InvalidModel("qubit: Delta must be positive");
    for (const auto& p : bath) {
      if (!(p.g > 0.0) || !(p.Q > 0.0) || !(p.omega > 0.0))
        throw InvalidModel("qubit: g, Q and omega must be positive for every bath");
    }
    if (!((*this)[Bath::Hot].beta > 0.0) || !((*this)[Bath::Cold].beta > (*this)[Bath::Hot].beta))
      throw InvalidModel("qubit: need beta_C > beta_H > 0");
  }

  double gap(double u) const { return 2.0 * E0 * std::sqrt(Delta * Delta + u * u); }
};

using QubitMatrix = Eigen::Matrix2cd;

inline QubitMatrix qubit_hamiltonian(const QubitModel& m, double u) {
  if (!std::isfinite(u)) throw std::invalid_argument("qubit_hamiltonian: u must be finite");
  QubitMatrix h;
  h << Complex(-m.E0 * u), Complex(-m.E0 * m.Delta), Complex(-m.E0 * m.Delta), Complex(m.E0 * u);
  return h;
}

/// S_alpha(de) = g/2 [1 + Q^2 (de/w - w/de)^2]^-1 de / (e^{beta de} - 1).
inline double noise_power_spectrum(const QubitModel& m, Bath b, double de) {
  if (de == 0.0 || !std::isfinite(de)) throw std::domain_error("noise_power_spectrum: energy must be nonzero");
  const auto& p = m[b];
  const double x = de / p.omega - p.omega / de;
  const double lorentz = 1.0 / (1.0 + p.Q * p.Q * x * x);
  return 0.5 * p.g * lorentz * de / std::expm1(p.beta * de);
}

struct TransitionRates {
  double up = 0.0;    ///< gamma_+, ground to excited
  double down = 0.0;  ///< gamma_-, excited to ground
  double total() const { return up + down; }
};

inline TransitionRates qubit_rates(const QubitModel& m, Bath b, double u) {
  const double de = m.gap(u);
  return {noise_power_spectrum(m, b, de), noise_power_spectrum(m, b, -de)};
}

/// Instantaneous eigenbasis; column 0 is |g>, column 1 is |e>.
struct QubitBasis {
  double ground_energy = 0.0;
  double excited_energy = 0.0;
  QubitMatrix vectors;
  Eigen::Vector2cd ground() const { return vectors.col(0); }
  Eigen::Vector2cd excited() const { return vectors.col(1); }
};

inline QubitBasis qubit_eigenbasis(const QubitModel& m, double u) {
  const Eigenbasis eb = eigenbasis(qubit_hamiltonian(m, u));
  return {eb.energies[0], eb.energies[1], eb.vectors};
}

/// Jump operators sigma_+ = |e><g| and sigma_- = |g><e| for the selected baths.
inline std::vector<LindbladGenerator<QubitMatrix>::Jump> qubit_jumps(const QubitModel& m, double u, Coupling c) {
  const QubitBasis basis = qubit_eigenbasis(m, u);
  const QubitMatrix raise = basis.excited() * basis.ground().adjoint();
  const QubitMatrix lower = basis.ground() * basis.excited().adjoint();
  std::vector<LindbladGenerator<QubitMatrix>::Jump> jumps;
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    if (!couples(c, b)) continue;
    const TransitionRates r = qubit_rates(m, b, u);
    jumps.push_back({raise, r.up, b});
    jumps.push_back({lower, r.down, b});
  }
  return jumps;
}

inline LindbladGenerator<QubitMatrix> qubit_generator(const QubitModel& m, double u, Coupling c = Coupling::Both) {
  return LindbladGenerator<QubitMatrix>(qubit_hamiltonian(m, u), qubit_jumps(m, u, c));
}

/// Dissipative part of the generator at control u, both baths coupled.
inline QubitMatrix qubit_dissipator(const QubitModel& m, const QubitMatrix& rho, double u,
                                    Coupling c = Coupling::Both) {
  LindbladGenerator<QubitMatrix> gen(QubitMatrix::Zero(), qubit_jumps(m, u, c));
  return gen.apply(rho);
}

inline int qubit_default_substeps(const QubitModel& m, double dt) { return default_substeps(dt, 0.05 / m.E0); }

/// One piecewise-constant step of duration dt at control u_new, starting from
/// rho which was last evolved under u_prev.
inline StepResult qubit_evolve_step(const ComplexMatrix& rho, const QubitModel& m, double u_new, Coupling d,
                                    double u_prev, double dt, int n_sub = 0, const StepChecks& checks = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("evolve_step: dt must be positive");
  if (rho.rows() != 2 || rho.cols() != 2) throw std::invalid_argument("evolve_step: qubit state must be 2x2");
  if (n_sub <= 0) n_sub = qubit_default_substeps(m, dt);

  const QubitMatrix r0 = rho;
  const QubitMatrix h_old = qubit_hamiltonian(m, u_prev);
  const QubitMatrix h_new = qubit_hamiltonian(m, u_new);

  StepResult out;
  out.u_internal_before = (r0 * h_old).trace().real();
  out.quench_work = (r0 * (h_new - h_old)).trace().real();

  const auto gen = qubit_generator(m, u_new, d);
  const QubitMatrix r1 = rk4_propagate(gen, r0, dt, n_sub, out.q_hot, out.q_cold);
  out.u_internal_after = (r1 * h_new).trace().real();
  out.rho_next = r1;

  if (!r1.allFinite()) throw SimulationError("evolve_step: non-finite state");
  if (checks.positivity) {
    const double lo = min_eigenvalue(r1);
    if (lo < -checks.positivity_tolerance)
      throw PositivityViolation("evolve_step: min eigenvalue " + std::to_string(lo) + " below tolerance");
  }
  return out;
}

}  // namespace qtm::sim
