#pragma once

#include "qtm/env/environment.hpp"

#include <cmath>
#include <stdexcept>

namespace qtm::baselines {

using env::MachineKind;

class EfficiencyUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Carnot efficiency (engine) or coefficient of performance (refrigerator).
inline double carnot(MachineKind m, double beta_hot, double beta_cold) {
  if (!(beta_cold > beta_hot) || !(beta_hot > 0.0)) throw std::invalid_argument("carnot: need 0 < beta_H < beta_C");
  return m == MachineKind::HeatEngine ? 1.0 - beta_hot / beta_cold : beta_hot / (beta_cold - beta_hot);
}

/// Inverse temperature that converts power into the entropy scale:
/// beta_C for the engine, beta_C - beta_H for the refrigerator.
inline double beta_nu(MachineKind m, double beta_hot, double beta_cold) {
  return m == MachineKind::HeatEngine ? beta_cold : beta_cold - beta_hot;
}

inline double efficiency_from_power_entropy(double power, double sigma, MachineKind m, double beta_hot,
                                            double beta_cold) {
  if (!(power > 0.0)) throw EfficiencyUndefined("efficiency: power must be positive");
  const double b = beta_nu(m, beta_hot, beta_cold);
  return carnot(m, beta_hot, beta_cold) / (1.0 + sigma / (b * power));
}

inline double sigma_from_power_efficiency(double power, double eta, MachineKind m, double beta_hot,
                                          double beta_cold) {
  if (!(eta > 0.0)) throw EfficiencyUndefined("sigma: efficiency must be positive");
  const double b = beta_nu(m, beta_hot, beta_cold);
  return (carnot(m, beta_hot, beta_cold) - eta) / eta * b * power;
}

struct Weights {
  double a = 0.0;
  double b = 0.0;
};

/// Maps weights (a1, b1) of a1*P + b1*eta onto (a2, b2) of a2*P - b2*Sigma
/// sharing the same stationary points, given the local (P, eta).
inline Weights weight_transform(double a1, double b1, double power, double eta, double eta_carnot, double beta) {
  if (!(a1 > 0.0) || !(b1 >= 0.0)) throw std::invalid_argument("weight_transform: need a1 > 0, b1 >= 0");
  if (!(power > 0.0)) throw std::invalid_argument("weight_transform: need P > 0");
  if (!(eta > 0.0 && eta < eta_carnot)) throw std::invalid_argument("weight_transform: need 0 < eta < Carnot");
  if (!(beta > 0.0)) throw std::invalid_argument("weight_transform: need beta > 0");
  const double d_p = (eta_carnot - eta) / eta * beta;
  const double d_eta = -beta * power * eta_carnot / (eta * eta);
  return {a1 - d_p / d_eta * b1, -b1 / d_eta};
}

inline Weights weight_transform(double a1, double b1, double power, double eta, MachineKind m, double beta_hot,
                                double beta_cold) {
  return weight_transform(a1, b1, power, eta, carnot(m, beta_hot, beta_cold), beta_nu(m, beta_hot, beta_cold));
}

}  // namespace qtm::baselines
