#pragma once

#include "qtm/baselines/efficiency.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace qtm::baselines {

/// Value, gradient and Hessian of a scalar function of two parameters.
struct Jet2 {
  double v = 0.0;
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
};

/// A differentiable two-parameter family of (power, efficiency) pairs.
struct ToyFamily {
  std::string name;
  std::function<Jet2(const Eigen::Vector2d&)> power;
  std::function<Jet2(const Eigen::Vector2d&)> efficiency;
  double eta_carnot = 1.0;
  double beta = 1.0;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
};

struct EquivalenceReport {
  bool passed = false;
  Eigen::Vector2d theta = Eigen::Vector2d::Zero();
  double power = 0.0;
  double efficiency = 0.0;
  Weights transformed;
  double grad_g_norm = 0.0;  ///< |grad G| at the located maximum
  Eigen::Vector2d grad_f = Eigen::Vector2d::Zero();
  Eigen::Vector2d hess_f_eigenvalues = Eigen::Vector2d::Zero();
  std::string message;
};

/// Gradient and Hessian of F = a2 P - b2 Sigma(P, eta) with
/// Sigma = beta P (eta_c / eta - 1), by the chain rule.
inline Jet2 transformed_objective(const ToyFamily& f, const Weights& w, const Eigen::Vector2d& th) {
  const Jet2 p = f.power(th), e = f.efficiency(th);
  const double b = f.beta, ec = f.eta_carnot;
  const double s = b * p.v * (ec / e.v - 1.0);
  const double s_p = b * (ec / e.v - 1.0);
  const double s_e = -b * p.v * ec / (e.v * e.v);
  const double s_pe = -b * ec / (e.v * e.v);
  const double s_ee = 2.0 * b * p.v * ec / (e.v * e.v * e.v);
  Jet2 out;
  out.v = w.a * p.v - w.b * s;
  out.g = w.a * p.g - w.b * (s_p * p.g + s_e * e.g);
  const Eigen::Matrix2d hs = s_pe * (p.g * e.g.transpose() + e.g * p.g.transpose()) +
                             s_ee * e.g * e.g.transpose() + s_p * p.h + s_e * e.h;
  out.h = w.a * p.h - w.b * hs;
  return out;
}

/// Maximizes G = a1 P + b1 eta by damped Newton from a start point.
inline Eigen::Vector2d maximize_linear_combination(const ToyFamily& f, double a1, double b1, Eigen::Vector2d th,
                                                   int max_iter = 200) {
  auto value = [&](const Eigen::Vector2d& x) { return a1 * f.power(x).v + b1 * f.efficiency(x).v; };
  for (int it = 0; it < max_iter; ++it) {
    const Jet2 p = f.power(th), e = f.efficiency(th);
    const Eigen::Vector2d g = a1 * p.g + b1 * e.g;
    const Eigen::Matrix2d h = a1 * p.h + b1 * e.h;
    if (g.norm() < 1e-15) break;
    Eigen::Vector2d step;
    const Eigen::LLT<Eigen::Matrix2d> llt(-h);
    step = llt.info() == Eigen::Success ? Eigen::Vector2d(llt.solve(g)) : Eigen::Vector2d(0.1 * g);
    const double g0 = value(th);
    double t = 1.0;
    while (t > 1e-12 && value(th + t * step) < g0 - 1e-15 * std::abs(g0)) t *= 0.5;
    const Eigen::Vector2d next = th + t * step;
    if ((next - th).norm() < 1e-16 * (1.0 + th.norm())) break;
    th = next;
  }
  return th;
}

/// Evaluates F at r.theta with r.transformed and fills the verdict.
inline EquivalenceReport check_transformed_stationarity(const ToyFamily& f, EquivalenceReport r, double grad_tol,
                                                        double hess_tol) {
  const Jet2 fj = transformed_objective(f, r.transformed, r.theta);
  r.grad_f = fj.g;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(fj.h);
  r.hess_f_eigenvalues = es.eigenvalues();
  const bool stationary = fj.g.norm() < grad_tol;
  const bool concave = r.hess_f_eigenvalues.maxCoeff() <= hess_tol;
  const bool positive = r.transformed.a > 0.0 && r.transformed.b >= 0.0;
  r.passed = stationary && concave && positive;
  if (!stationary) r.message += "gradient of transformed objective " + std::to_string(fj.g.norm()) + "; ";
  if (!concave) r.message += "Hessian eigenvalue " + std::to_string(r.hess_f_eigenvalues.maxCoeff()) + "; ";
  if (!positive) r.message += "transformed weights not positive; ";
  return r;
}

/// Locates a maximum of a1 P + b1 eta, maps the weights to (a2, b2) and checks
/// that the same point is stationary for a2 P - b2 Sigma with no ascending
/// curvature.
inline EquivalenceReport verify_pareto_equivalence(const ToyFamily& f, double a1, double b1, double grad_tol = 1e-8,
                                                   double hess_tol = 1e-8) {
  EquivalenceReport r;
  r.theta = maximize_linear_combination(f, a1, b1, f.start);
  const Jet2 p = f.power(r.theta), e = f.efficiency(r.theta);
  r.power = p.v;
  r.efficiency = e.v;
  r.grad_g_norm = (a1 * p.g + b1 * e.g).norm();
  if (!(p.v > 0.0) || !(e.v > 0.0 && e.v < f.eta_carnot)) {
    r.message = "maximum outside the domain 0 < eta < eta_c, P > 0";
    return r;
  }
  r.transformed = weight_transform(a1, b1, p.v, e.v, f.eta_carnot, f.beta);
  return check_transformed_stationarity(f, r, grad_tol, hess_tol);
}

/// Three analytic families used by the verifier.
inline std::vector<ToyFamily> standard_toy_families() {
  std::vector<ToyFamily> out;
  {
    // Concave quadratics.
    ToyFamily f;
    f.name = "quadratic";
    f.eta_carnot = 1.0;
    f.beta = 1.0;
    f.start = {0.1, -0.1};
    f.power = [](const Eigen::Vector2d& x) {
      Eigen::Matrix2d a;
      a << 2.0, 0.3, 0.3, 1.0;
      const Eigen::Vector2d m(0.5, 0.2);
      Jet2 j;
      const Eigen::Vector2d d = x - m;
      j.v = 1.0 - 0.5 * d.dot(a * d);
      j.g = -a * d;
      j.h = -a;
      return j;
    };
    f.efficiency = [](const Eigen::Vector2d& x) {
      Eigen::Matrix2d b;
      b << 1.5, -0.2, -0.2, 2.5;
      const Eigen::Vector2d m(-0.3, 0.4);
      Jet2 j;
      const Eigen::Vector2d d = x - m;
      j.v = 0.6 - 0.5 * d.dot(b * d);
      j.g = -b * d;
      j.h = -b;
      return j;
    };
    out.push_back(f);
  }
  {
    // Gaussian bumps; engine-like Carnot value.
    ToyFamily f;
    f.name = "gaussian";
    f.eta_carnot = 0.9;
    f.beta = 2.0;
    f.start = {0.2, 0.1};
    auto bump = [](double amp, double offset, Eigen::Vector2d m, double s2) {
      return [=](const Eigen::Vector2d& x) {
        const Eigen::Vector2d d = x - m;
        const double e = std::exp(-d.squaredNorm() / (2.0 * s2));
        Jet2 j;
        j.v = offset + amp * e;
        j.g = -amp * e * d / s2;
        j.h = amp * e * (d * d.transpose() / (s2 * s2) - Eigen::Matrix2d::Identity() / s2);
        return j;
      };
    };
    f.power = bump(1.0, 0.0, Eigen::Vector2d(0.4, 0.0), 1.0);
    f.efficiency = bump(0.5, 0.1, Eigen::Vector2d(0.0, 0.3), 0.5);
    out.push_back(f);
  }
  {
    // Quartic power with a logistic efficiency capped below Carnot.
    ToyFamily f;
    f.name = "quartic-logistic";
    f.eta_carnot = 0.5;
    f.beta = 10.0 / 3.0;
    f.start = {0.0, 0.0};
    f.power = [](const Eigen::Vector2d& x) {
      Jet2 j;
      const double a = x(0), b = x(1) - 0.5 * x(0);
      j.v = 2.0 - 0.25 * a * a * a * a - a * a - b * b + 0.3 * a;
      // db/dx0 = -0.5, db/dx1 = 1
      const double dv_da = -a * a * a - 2.0 * a + 0.3, dv_db = -2.0 * b;
      j.g << dv_da - 0.5 * dv_db, dv_db;
      const double d2a = -3.0 * a * a - 2.0, d2b = -2.0;
      j.h << d2a + 0.25 * d2b, -0.5 * d2b, -0.5 * d2b, d2b;
      return j;
    };
    f.efficiency = [](const Eigen::Vector2d& x) {
      // 0.45 * logistic(z) with z = 1 - x0^2 - 2 x1^2 - x0 x1
      const double z = 1.0 - x(0) * x(0) - 2.0 * x(1) * x(1) - x(0) * x(1);
      const Eigen::Vector2d zg(-2.0 * x(0) - x(1), -4.0 * x(1) - x(0));
      Eigen::Matrix2d zh;
      zh << -2.0, -1.0, -1.0, -4.0;
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double s1 = s * (1.0 - s), s2 = s1 * (1.0 - 2.0 * s);
      Jet2 j;
      j.v = 0.45 * s;
      j.g = 0.45 * s1 * zg;
      j.h = 0.45 * (s2 * zg * zg.transpose() + s1 * zh);
      return j;
    };
    out.push_back(f);
  }
  return out;
}

}  // namespace qtm::baselines
