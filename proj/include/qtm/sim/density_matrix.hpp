#pragma once

#include "qtm/sim/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <vector>

namespace qtm::sim {

/// Largest elementwise deviation |rho - rho^dagger|.
template <class Derived>
double hermiticity_error(const Eigen::MatrixBase<Derived>& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

template <class Derived>
double trace_real(const Eigen::MatrixBase<Derived>& rho) {
  return rho.trace().real();
}

/// Eigenvalues of the Hermitian part, ascending.
template <class Derived>
Eigen::VectorXd hermitian_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

template <class Derived>
double min_eigenvalue(const Eigen::MatrixBase<Derived>& rho) {
  return hermitian_eigenvalues(rho).minCoeff();
}

/// Spectral decomposition with deterministic phases: every eigenvector has
/// its largest-magnitude component real and positive.
struct Eigenbasis {
  Eigen::VectorXd energies;  ///< ascending
  ComplexMatrix vectors;     ///< columns are eigenvectors
};

inline void fix_phases(ComplexMatrix& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index idx = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      // Ties broken toward the lower index so the choice is deterministic.
      const double mag = std::abs(vectors(i, k));
      if (mag > best * (1.0 + 1e-12)) {
        best = mag;
        idx = i;
      }
    }
    if (best > 0.0) {
      const Complex phase = std::conj(vectors(idx, k)) / best;
      vectors.col(k) *= phase;
      vectors(idx, k) = Complex(vectors(idx, k).real(), 0.0);
    }
  }
}

template <class Derived>
Eigenbasis eigenbasis(const Eigen::MatrixBase<Derived>& h) {
  ComplexMatrix herm = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(herm);
  if (solver.info() != Eigen::Success) throw SimulationError("eigenbasis: eigensolver failed");
  Eigenbasis out{solver.eigenvalues(), solver.eigenvectors()};
  fix_phases(out.vectors);
  return out;
}

/// Von Neumann entropy with natural logarithm.
template <class Derived>
double von_neumann_entropy(const Eigen::MatrixBase<Derived>& rho) {
  const Eigen::VectorXd p = hermitian_eigenvalues(rho);
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s -= p[i] * std::log(p[i]);
  }
  return s;
}

inline double shannon_entropy(const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s -= p[i] * std::log(p[i]);
  }
  return s;
}

/// Gibbs state e^{-beta H}/Z.
template <class Derived>
ComplexMatrix gibbs_state(const Eigen::MatrixBase<Derived>& h, double beta) {
  const Eigenbasis basis = eigenbasis(h);
  const double e0 = basis.energies.minCoeff();
  Eigen::VectorXd w = (-(beta) * (basis.energies.array() - e0)).exp();
  w /= w.sum();
  return basis.vectors * w.cast<Complex>().asDiagonal() * basis.vectors.adjoint();
}

/// Trace distance 0.5 * ||a - b||_1.
template <class A, class B>
double trace_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const Eigen::VectorXd ev = hermitian_eigenvalues(ComplexMatrix(a - b));
  return 0.5 * ev.cwiseAbs().sum();
}

/// Relative entropy of coherence S(rho_diag) - S(rho) in the eigenbasis of h.
template <class A, class B>
double relative_entropy_of_coherence(const Eigen::MatrixBase<A>& rho, const Eigen::MatrixBase<B>& h) {
  const Eigenbasis basis = eigenbasis(h);
  const ComplexMatrix in_basis = basis.vectors.adjoint() * rho * basis.vectors;
  const Eigen::VectorXd diag = in_basis.diagonal().real();
  return std::max(0.0, shannon_entropy(diag) - von_neumann_entropy(in_basis));
}

/// Entropy production rate -beta_C J_C - beta_H J_H.
inline double entropy_production(double j_hot, double j_cold, double beta_hot, double beta_cold) {
  return -beta_cold * j_cold - beta_hot * j_hot;
}

/// Verifies the state invariants; returns an empty string when all hold.
template <class Derived>
std::string validate_density_matrix(const Eigen::MatrixBase<Derived>& rho, double herm_tol = 1e-12,
                                    double trace_tol = 1e-9, double eig_tol = 1e-9) {
  if (rho.rows() != rho.cols() || rho.rows() == 0) return "not a non-empty square matrix";
  if (!rho.allFinite()) return "non-finite entries";
  if (hermiticity_error(rho) > herm_tol) return "not Hermitian";
  if (std::abs(trace_real(rho) - 1.0) > trace_tol) return "trace differs from one";
  if (min_eigenvalue(rho) < -eig_tol) return "negative eigenvalue";
  return {};
}

}  // namespace qtm::sim
