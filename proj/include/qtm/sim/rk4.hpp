#pragma once

#include "qtm/sim/common.hpp"

#include <array>
#include <vector>

namespace qtm::sim {

/// Time-independent Lindblad generator written as
///   L(rho) = K rho + (K rho)^dagger + sum_k rate_k A_k rho A_k^dagger,
/// with K = -iH - 1/2 sum_k rate_k A_k^dagger A_k. Heat currents are linear
/// functionals J_alpha(rho) = Tr[rho O_alpha] with O_alpha the adjoint
/// dissipator of bath alpha applied to H.
template <class Matrix>
struct LindbladGenerator {
  struct Jump {
    Matrix op;
    double rate = 0.0;
    Bath bath = Bath::Hot;
  };

  Matrix hamiltonian;
  Matrix effective;
  std::vector<Jump> jumps;
  std::array<Matrix, 2> heat_observable;

  LindbladGenerator() = default;

  LindbladGenerator(const Matrix& h, std::vector<Jump> js) : hamiltonian(h), jumps(std::move(js)) {
    effective = Complex(0.0, -1.0) * hamiltonian;
    heat_observable[0] = Matrix::Zero(h.rows(), h.cols());
    heat_observable[1] = Matrix::Zero(h.rows(), h.cols());
    for (const auto& j : jumps) {
      const Matrix ada = j.op.adjoint() * j.op;
      effective -= 0.5 * j.rate * ada;
      const Matrix o = j.rate * (j.op.adjoint() * hamiltonian * j.op - 0.5 * (ada * hamiltonian + hamiltonian * ada));
      heat_observable[static_cast<int>(j.bath)] += o;
    }
  }

  Matrix apply(const Matrix& rho) const {
    Matrix k = effective * rho;
    Matrix out = k + k.adjoint();
    for (const auto& j : jumps) {
      out += j.rate * (j.op * rho * j.op.adjoint());
    }
    return out;
  }

  double heat_current(const Matrix& rho, Bath b) const {
    return (rho * heat_observable[static_cast<int>(b)]).trace().real();
  }
};

/// Fixed-step RK4 over `duration` with `n_sub` substeps. Heat integrals use
/// the same stage weights as the state update, so for a constant H the
/// energy change equals the accumulated heat to rounding.
template <class Matrix>
Matrix rk4_propagate(const LindbladGenerator<Matrix>& gen, Matrix rho, double duration, int n_sub,
                     double& q_hot, double& q_cold) {
  const double h = duration / n_sub;
  for (int s = 0; s < n_sub; ++s) {
    const Matrix k1 = gen.apply(rho);
    const Matrix r2 = rho + (0.5 * h) * k1;
    const Matrix k2 = gen.apply(r2);
    const Matrix r3 = rho + (0.5 * h) * k2;
    const Matrix k3 = gen.apply(r3);
    const Matrix r4 = rho + h * k3;
    const Matrix k4 = gen.apply(r4);
    for (Bath b : {Bath::Hot, Bath::Cold}) {
      const double j = gen.heat_current(rho, b) + 2.0 * gen.heat_current(r2, b) + 2.0 * gen.heat_current(r3, b) +
                       gen.heat_current(r4, b);
      (b == Bath::Hot ? q_hot : q_cold) += h / 6.0 * j;
    }
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = 0.5 * (rho + rho.adjoint()).eval();
  }
  return rho;
}

/// Smallest power of two n with duration/n <= duration/16 and <= max_substep.
inline int default_substeps(double duration, double max_substep) {
  int n = 16;
  while (duration / n > max_substep) n *= 2;
  return n;
}

}  // namespace qtm::sim
