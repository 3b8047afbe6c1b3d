#pragma once

#include "qtm/nn/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qtm::nn {

struct LogSigmaRange {
  double lo = -20.0;
  double hi = 2.0;
};

struct SquashedSample {
  Var u;
  Var log_prob;
};

/// Reparameterized sample of u = a + (b - a)/2 (1 + tanh(mu + sigma xi)) and
/// its log-density, elementwise over equally shaped mu, log_sigma and xi.
inline SquashedSample squashed_gaussian(const Var& mu, const Var& log_sigma, const Mat& xi, double a, double b,
                                        LogSigmaRange range = {}) {
  if (!(b > a)) throw std::invalid_argument("squashed_gaussian: empty action range");
  if (xi.rows() != mu.rows() || xi.cols() != mu.cols()) throw ShapeError("squashed_gaussian: noise shape mismatch");
  Tape& t = *mu.tape;
  const Var ls = clamp(log_sigma, range.lo, range.hi);
  const Var noise = t.constant(xi);
  const Var zeta = add(mu, mul(exp(ls), noise));
  const double half = 0.5 * (b - a);
  const Var u = add_scalar(scale(add_scalar(tanh(zeta), 1.0), half), a);
  const double c = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(half);
  const Var quad = t.constant(-0.5 * xi.array().square().matrix());
  const Var log_prob = add_scalar(sub(sub(quad, ls), log_sech2(zeta)), c);
  return {u, log_prob};
}

/// Deterministic action: the squashed mean.
inline double squashed_mean(double mu, double a, double b) { return a + 0.5 * (b - a) * (1.0 + std::tanh(mu)); }

/// Closed-form log-density of the squashed Gaussian at u in (a, b).
inline double squashed_log_density(double u, double mu, double sigma, double a, double b) {
  const double half = 0.5 * (b - a);
  const double y = (u - a) / half - 1.0;
  const double zeta = std::atanh(y);
  const double z = (zeta - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(half * (1.0 - y * y));
}

}  // namespace qtm::nn
