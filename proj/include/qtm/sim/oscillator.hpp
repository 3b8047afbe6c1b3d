#pragma once

#include "qtm/sim/common.hpp"
#include "qtm/sim/density_matrix.hpp"
#include "qtm/sim/rk4.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace qtm::sim {

/// Harmonic oscillator with tunable frequency u*w0, coupled to one bath at a
/// time through a_u and a_u^dagger.
///
/// States are stored in the instantaneous Fock basis of the frequency at
/// which they were last evolved. A control switch rotates the state into the
/// new Fock basis with an exact real overlap matrix; a step at fixed control
/// is then a phase rotation composed with the exact thermal channel of the
/// coupled bath. An RK4 integration of the same master equation in the same
/// frame is kept as a cross-check.
struct OscillatorModel {
  struct BathParams {
    double Gamma = 0.6;  ///< thermalization rate
    double beta = 1.0;   ///< inverse temperature
  };

  double m = 1.0;
  double w0 = 2.0;
  std::array<BathParams, 2> bath{};
  int n_fock = 128;

  const BathParams& operator[](Bath b) const { return bath[static_cast<int>(b)]; }
  BathParams& operator[](Bath b) { return bath[static_cast<int>(b)]; }

  void validate() const {
    if (n_fock < 8) throw InvalidModel("oscillator: n_fock must be at least 8");
    if (!(m > 0.0) || !(w0 > 0.0)) throw InvalidModel("oscillator: m and w0 must be positive");
    for (const auto& p : bath)
      if (!(p.Gamma > 0.0)) throw InvalidModel("oscillator: Gamma must be positive");
    if (!((*this)[Bath::Hot].beta > 0.0) || !((*this)[Bath::Cold].beta > (*this)[Bath::Hot].beta))
      throw InvalidModel("oscillator: need beta_C > beta_H > 0");
  }

  double frequency(double u) const { return u * w0; }

  /// Bose-Einstein occupation of bath b at the frequency set by u.
  double occupation(Bath b, double u) const { return bose_einstein((*this)[b].beta * frequency(u)); }
};

inline void require_positive_control(double u) {
  if (!(u > 0.0) || !std::isfinite(u)) throw std::invalid_argument("oscillator: control u must be positive");
}

/// Truncated lowering operator in a Fock basis.
inline RealMatrix fock_lowering(int n) {
  RealMatrix a = RealMatrix::Zero(n, n);
  for (int j = 1; j < n; ++j) a(j - 1, j) = std::sqrt(static_cast<double>(j));
  return a;
}

struct OscillatorOperators {
  ComplexMatrix hamiltonian;
  ComplexMatrix lower;  ///< a_u
  ComplexMatrix raise;  ///< a_u^dagger
};

/// H(u) = p^2/2m + m (u w0)^2 q^2 / 2 and its ladder operators, expressed in
/// the truncated Fock basis of the reference frequency w0.
inline OscillatorOperators oscillator_hamiltonian_and_ladders(const OscillatorModel& model, double u) {
  require_positive_control(u);
  const int n = model.n_fock;
  const ComplexMatrix a = fock_lowering(n).cast<Complex>();
  const ComplexMatrix ad = a.adjoint();
  const double mw = model.m * model.w0;
  const ComplexMatrix q = (a + ad) / std::sqrt(2.0 * mw);
  const ComplexMatrix p = kI * std::sqrt(mw / 2.0) * (ad - a);
  const double w = model.frequency(u);
  OscillatorOperators ops;
  ops.hamiltonian = p * p / (2.0 * model.m) + 0.5 * model.m * w * w * q * q;
  const double s = std::sqrt(model.m * w);
  ops.lower = (s * q + kI * p / s) / std::sqrt(2.0);
  ops.raise = ops.lower.adjoint();
  return ops;
}

/// Dissipator of bath d at control u, acting on a state in the instantaneous
/// Fock basis of u.
inline ComplexMatrix oscillator_dissipator(const OscillatorModel& model, const ComplexMatrix& rho, double u,
                                           Coupling d) {
  require_positive_control(u);
  if (d == Coupling::Both) throw std::invalid_argument("oscillator_dissipator: select one bath at a time");
  ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    if (!couples(d, b)) continue;
    const double n = model.occupation(b, u);
    const double g = model[b].Gamma;
    const ComplexMatrix a = fock_lowering(static_cast<int>(rho.rows())).cast<Complex>();
    const ComplexMatrix ad = a.adjoint();
    auto lind = [&](const ComplexMatrix& op, double rate) {
      const ComplexMatrix opd = op.adjoint();
      const ComplexMatrix oo = opd * op;
      out += rate * (op * rho * opd - 0.5 * (oo * rho + rho * oo));
    };
    lind(a, g * (1.0 + n));
    lind(ad, g * n);
  }
  return out;
}

/// T(j, m) = <j_old | m_new> between the Fock bases at u_old and u_new.
inline RealMatrix overlap_matrix(double u_old, double u_new, int n) {
  require_positive_control(u_old);
  require_positive_control(u_new);
  if (u_old == u_new) return RealMatrix::Identity(n, n);
  const double k = u_new / u_old;
  const double sk = std::sqrt(k);
  const double ch = 0.5 * (sk + 1.0 / sk);
  const double sh = 0.5 * (sk - 1.0 / sk);
  // Column m solves a_new |m_new> = sqrt(m) |m-1_new> row by row downward,
  // seeded by <0|m_new> = sh c(1, m-1)/sqrt(m). The homogeneous factor
  // -sh/ch sqrt(j/(j+1)) has modulus below one, so the recursion is stable
  // and needs no rows beyond the truncation.
  RealMatrix c = RealMatrix::Zero(n, n);
  for (int mcol = 0; mcol < n; ++mcol) {
    const double sm = std::sqrt(static_cast<double>(mcol));
    c(0, mcol) = mcol == 0 ? 1.0 / std::sqrt(ch) : sh / sm * c(1, mcol - 1);
    for (int j = 0; j + 1 < n; ++j) {
      double v = mcol > 0 ? sm * c(j, mcol - 1) : 0.0;
      if (j > 0) v -= sh * std::sqrt(static_cast<double>(j)) * c(j - 1, mcol);
      c(j + 1, mcol) = v / (ch * std::sqrt(static_cast<double>(j + 1)));
    }
  }
  return c;
}

/// rho expressed in the new basis: T^T rho T. The truncated T is a
/// contraction; the probability it drops is returned to the top level, which
/// keeps the map trace preserving and completely positive. The tail guard
/// bounds the population that level may carry.
inline ComplexMatrix change_basis(const ComplexMatrix& rho, const RealMatrix& t) {
  const RealMatrix re = t.transpose() * rho.real() * t;
  const RealMatrix im = t.transpose() * rho.imag() * t;
  ComplexMatrix out(re.rows(), re.cols());
  out.real() = re;
  out.imag() = im;
  out = 0.5 * (out + out.adjoint()).eval();
  const Eigen::Index top = out.rows() - 1;
  out(top, top) += rho.trace().real() - out.trace().real();
  return out;
}

/// Free evolution under a diagonal H for time dt.
inline void apply_free_phases(ComplexMatrix& rho, double omega, double dt) {
  const Eigen::Index n = rho.rows();
  std::vector<Complex> ph(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) ph[k] = std::polar(1.0, -omega * dt * static_cast<double>(k));
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const Eigen::Index diff = r - c;
      rho(r, c) *= diff > 0 ? ph[diff] : std::conj(ph[-diff]);
    }
  }
}

inline double mean_occupation(const ComplexMatrix& rho) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < rho.rows(); ++j) s += static_cast<double>(j) * rho(j, j).real();
  return s;
}

inline double tail_population(const ComplexMatrix& rho) {
  const Eigen::Index n = rho.rows();
  return rho(n - 1, n - 1).real() + rho(n - 2, n - 2).real();
}

/// Exact solution over a time t of the single-mode thermal master equation
/// with rate Gamma and occupation n_th, written as a pure-loss channel of
/// transmissivity tau followed by a quantum-limited amplifier of gain G.
class ThermalChannel {
 public:
  ThermalChannel(int n, double gamma, double n_th, double t) : n_(n) {
    if (!(t >= 0.0) || !(gamma > 0.0) || !(n_th >= 0.0)) throw std::invalid_argument("ThermalChannel: bad arguments");
    const double one_minus_eta = -std::expm1(-gamma * t);
    const double g = 1.0 + one_minus_eta * n_th;
    const double log_tau = -gamma * t - std::log(g);
    const double log_loss = std::log(one_minus_eta * (1.0 + n_th)) - std::log(g);  // ln(1 - tau)
    const double log_gain_noise = std::log(one_minus_eta * n_th) - std::log(g);     // ln(1 - 1/G)
    const double log_g = std::log(g);
    std::vector<double> lf(static_cast<std::size_t>(2 * n + 1));
    for (int i = 0; i <= 2 * n; ++i) lf[i] = std::lgamma(i + 1.0);
    auto log_binom = [&](int a, int b) { return lf[a] - lf[b] - lf[a - b]; };
    loss_ = RealMatrix::Zero(n, n);
    amp_ = RealMatrix::Zero(n, n);
    escaped_ = Eigen::VectorXd::Zero(n);
    for (int src = 0; src < n; ++src) {
      for (int l = 0; l <= src; ++l) {
        // |src> -> |src - l> under loss.
        double lw = log_binom(src, l) + (src - l) * log_tau;
        if (l > 0) lw += l * log_loss;
        loss_(src, l) = (l > 0 && one_minus_eta == 0.0) ? 0.0 : std::exp(0.5 * lw);
      }
      for (int l = 0; src + l < n; ++l) {
        // |src> -> |src + l> under amplification.
        double lw = log_binom(src + l, l) - (src + 1) * log_g;
        if (l > 0) {
          if (!(one_minus_eta * n_th > 0.0)) break;
          lw += l * log_gain_noise;
        }
        amp_(src, l) = std::exp(0.5 * lw);
      }
      double kept = 0.0;
      for (int l = 0; src + l < n; ++l) kept += amp_(src, l) * amp_(src, l);
      escaped_[src] = std::max(0.0, 1.0 - kept);
    }
  }

  ComplexMatrix apply(const ComplexMatrix& rho) const {
    const int n = n_;
    ComplexMatrix mid = ComplexMatrix::Zero(n, n);
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) {
        Complex acc = 0.0;
        const int lmax = n - 1 - std::max(r, c);
        for (int l = 0; l <= lmax; ++l) acc += loss_(r + l, l) * loss_(c + l, l) * rho(r + l, c + l);
        mid(r, c) = acc;
      }
    }
    ComplexMatrix out = ComplexMatrix::Zero(n, n);
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) {
        Complex acc = 0.0;
        const int lmax = std::min(r, c);
        for (int l = 0; l <= lmax; ++l) acc += amp_(r - l, l) * amp_(c - l, l) * mid(r - l, c - l);
        out(r, c) = acc;
      }
    }
    // Amplification beyond the truncation is folded onto the top level.
    double spill = 0.0;
    for (int j = 0; j < n; ++j) spill += escaped_[j] * mid(j, j).real();
    out(n - 1, n - 1) += spill;
    return 0.5 * (out + out.adjoint());
  }

 private:
  int n_;
  RealMatrix loss_;  ///< loss_(n, l): amplitude of |n> -> |n-l>
  RealMatrix amp_;   ///< amp_(n, l): amplitude of |n> -> |n+l>
  Eigen::VectorXd escaped_;  ///< probability amplified past the top level
};

/// Gibbs state of H(u) at inverse temperature beta in the instantaneous basis.
inline ComplexMatrix oscillator_gibbs(const OscillatorModel& model, double u, double beta) {
  require_positive_control(u);
  const int n = model.n_fock;
  const double x = beta * model.frequency(u);
  Eigen::VectorXd p(n);
  for (int j = 0; j < n; ++j) p[j] = std::exp(-x * j);
  p /= p.sum();
  return p.cast<Complex>().asDiagonal();
}

inline double oscillator_energy(const OscillatorModel& model, const ComplexMatrix& rho, double u) {
  return model.frequency(u) * (mean_occupation(rho) + 0.5 * trace_real(rho));
}

inline void check_oscillator_state(const ComplexMatrix& rho, const StepChecks& checks) {
  if (!rho.allFinite()) throw SimulationError("evolve_step: non-finite state");
  const double tail = tail_population(rho);
  if (tail > checks.truncation_tolerance)
    throw TruncationOverflow("evolve_step: top-level population " + std::to_string(tail) + " exceeds tolerance");
  if (checks.positivity) {
    const double lo = min_eigenvalue(rho);
    if (lo < -checks.positivity_tolerance)
      throw PositivityViolation("evolve_step: min eigenvalue " + std::to_string(lo) + " below tolerance");
  }
}

/// One control step. `rho` is in the basis of u_prev; rho_next is in the
/// basis of u_new. Heat is the energy change at fixed u_new and is assigned
/// to the coupled bath.
inline StepResult oscillator_evolve_step(const ComplexMatrix& rho, const OscillatorModel& model, double u_new,
                                         Coupling d, double u_prev, double dt, const StepChecks& checks = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("evolve_step: dt must be positive");
  if (d == Coupling::Both) throw std::invalid_argument("evolve_step: oscillator couples one bath at a time");
  if (rho.rows() != model.n_fock) throw std::invalid_argument("evolve_step: state dimension differs from n_fock");
  require_positive_control(u_new);
  require_positive_control(u_prev);

  StepResult out;
  out.u_internal_before = oscillator_energy(model, rho, u_prev);
  ComplexMatrix r = u_new == u_prev ? rho : change_basis(rho, overlap_matrix(u_prev, u_new, model.n_fock));
  const double e_switched = oscillator_energy(model, r, u_new);
  out.quench_work = e_switched - out.u_internal_before;

  apply_free_phases(r, model.frequency(u_new), dt);
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    if (!couples(d, b)) continue;
    const ThermalChannel ch(model.n_fock, model[b].Gamma, model.occupation(b, u_new), dt);
    r = ch.apply(r);
    const double e_after = oscillator_energy(model, r, u_new);
    (b == Bath::Hot ? out.q_hot : out.q_cold) = e_after - e_switched;
  }
  out.u_internal_after = oscillator_energy(model, r, u_new);
  check_oscillator_state(r, checks);
  out.rho_next = std::move(r);
  return out;
}

/// Reference path: same basis change, then fixed-step RK4 of the truncated
/// master equation in the instantaneous basis.
inline StepResult oscillator_rk4_step(const ComplexMatrix& rho, const OscillatorModel& model, double u_new,
                                      Coupling d, double u_prev, double dt, int n_sub,
                                      const StepChecks& checks = {}) {
  if (!(dt > 0.0) || n_sub < 1) throw std::invalid_argument("rk4_step: need dt > 0 and n_sub >= 1");
  const int n = model.n_fock;
  StepResult out;
  out.u_internal_before = oscillator_energy(model, rho, u_prev);
  ComplexMatrix r = u_new == u_prev ? rho : change_basis(rho, overlap_matrix(u_prev, u_new, n));
  out.quench_work = oscillator_energy(model, r, u_new) - out.u_internal_before;

  const double w = model.frequency(u_new);
  ComplexMatrix h = ComplexMatrix::Zero(n, n);
  for (int j = 0; j < n; ++j) h(j, j) = w * (j + 0.5);
  const ComplexMatrix a = fock_lowering(n).cast<Complex>();
  std::vector<LindbladGenerator<ComplexMatrix>::Jump> jumps;
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    if (!couples(d, b)) continue;
    const double nb = model.occupation(b, u_new);
    jumps.push_back({a, model[b].Gamma * (1.0 + nb), b});
    jumps.push_back({ComplexMatrix(a.adjoint()), model[b].Gamma * nb, b});
  }
  const LindbladGenerator<ComplexMatrix> gen(h, std::move(jumps));
  r = rk4_propagate(gen, r, dt, n_sub, out.q_hot, out.q_cold);
  out.u_internal_after = oscillator_energy(model, r, u_new);
  check_oscillator_state(r, checks);
  out.rho_next = std::move(r);
  return out;
}

}  // namespace qtm::sim
