#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qtm::sim {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr Complex kI{0.0, 1.0};

/// Base class for failures detected while propagating a state.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The propagated state acquired a negative eigenvalue below tolerance.
class PositivityViolation : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

/// Probability mass reached the top of the truncated Fock space.
class TruncationOverflow : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

class InvalidModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Bath : std::uint8_t { Hot = 0, Cold = 1 };

/// Which baths are coupled to the working medium during a control step.
enum class Coupling : std::uint8_t { None = 0, Hot = 1, Cold = 2, Both = 3 };

constexpr bool couples(Coupling c, Bath b) noexcept {
  const auto bits = static_cast<std::uint8_t>(c);
  return b == Bath::Hot ? (bits & 1u) != 0 : (bits & 2u) != 0;
}

inline const char* to_string(Coupling c) noexcept {
  switch (c) {
    case Coupling::None: return "None";
    case Coupling::Hot: return "Hot";
    case Coupling::Cold: return "Cold";
    case Coupling::Both: return "Both";
  }
  return "?";
}

/// Bose-Einstein occupation 1/(e^x - 1), x > 0.
inline double bose_einstein(double x) {
  if (!(x > 0.0)) throw std::domain_error("bose_einstein: argument must be positive");
  return 1.0 / std::expm1(x);
}

/// Integrated output of one piecewise-constant control step.
struct StepResult {
  ComplexMatrix rho_next;
  double q_hot = 0.0;        ///< integral of J_H over the step
  double q_cold = 0.0;       ///< integral of J_C over the step
  double quench_work = 0.0;  ///< Tr[rho (H_new - H_old)] at the control switch
  double u_internal_before = 0.0;  ///< Tr[rho H_old] before the switch
  double u_internal_after = 0.0;   ///< Tr[rho_next H_new]
};

/// Options shared by both propagators.
struct StepChecks {
  bool positivity = true;
  double positivity_tolerance = 1e-6;
  double truncation_tolerance = 1e-6;
};

}  // namespace qtm::sim
