#include "qtm/baselines/optimize.hpp"
#include "qtm/baselines/pareto_equivalence.hpp"
#include "qtm/env/presets.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

using namespace qtm;
using namespace qtm::baselines;

namespace {

const double kPi = std::numbers::pi;

env::EnvConfig engine() { return env::oscillator_engine_preset(); }
env::EnvConfig fridge() { return env::qubit_refrigerator_preset(); }

double bose(double x) { return 1.0 / (std::exp(x) - 1.0); }

// Central differences of a jet's value and gradient.
void expect_jet_consistent(const std::function<Jet2(const Eigen::Vector2d&)>& f, const Eigen::Vector2d& x) {
  const double h = 1e-5;
  const Jet2 j = f(x);
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    e(i) = h;
    const Jet2 p = f(x + e), m = f(x - e);
    EXPECT_NEAR((p.v - m.v) / (2 * h), j.g(i), 1e-8);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR((p.g(k) - m.g(k)) / (2 * h), j.h(k, i), 1e-7);
  }
}

}  // namespace

TEST(Trapezoid, Landmarks) {
  EXPECT_DOUBLE_EQ(trapezoid_u(0.0, 1.0), 0.5);
  EXPECT_NEAR(trapezoid_u(kPi, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(trapezoid_u(kPi / 2, 1.0), 0.25, 1e-15);
  for (double t = 0; t < 20; t += 0.01) {
    const double u = trapezoid_u(t, 0.7);
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 0.5);
  }
}

TEST(Efficiency, ReversibleAndHandValues) {
  const double bh = 10.0 / 3.0, bc = 20.0 / 3.0;
  EXPECT_DOUBLE_EQ(carnot(MachineKind::Refrigerator, bh, bc), 1.0);
  EXPECT_DOUBLE_EQ(carnot(MachineKind::HeatEngine, 0.2, 2.0), 0.9);
  EXPECT_DOUBLE_EQ(efficiency_from_power_entropy(0.3, 0.0, MachineKind::Refrigerator, bh, bc), 1.0);
  EXPECT_DOUBLE_EQ(efficiency_from_power_entropy(0.3, 0.0, MachineKind::HeatEngine, 0.2, 2.0), 0.9);
  const double p = 0.7;
  EXPECT_NEAR(efficiency_from_power_entropy(p, (bc - bh) * p, MachineKind::Refrigerator, bh, bc), 0.5, 1e-15);
  EXPECT_THROW(efficiency_from_power_entropy(0.0, 1.0, MachineKind::HeatEngine, 0.2, 2.0), EfficiencyUndefined);
  EXPECT_THROW(efficiency_from_power_entropy(-1.0, 1.0, MachineKind::HeatEngine, 0.2, 2.0), EfficiencyUndefined);
}

TEST(Efficiency, RoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.01, 1.0);
  for (auto m : {MachineKind::Refrigerator, MachineKind::HeatEngine}) {
    const double bh = m == MachineKind::HeatEngine ? 0.2 : 10.0 / 3.0;
    const double bc = m == MachineKind::HeatEngine ? 2.0 : 20.0 / 3.0;
    for (int i = 0; i < 200; ++i) {
      const double p = U(rng), eta = U(rng) * carnot(m, bh, bc);
      const double s = sigma_from_power_efficiency(p, eta, m, bh, bc);
      EXPECT_GE(s, 0.0);
      EXPECT_NEAR(efficiency_from_power_entropy(p, s, m, bh, bc), eta, 1e-12);
    }
  }
}

TEST(Efficiency, MatchesFirstLawRatios) {
  // The entropy form agrees with the heat-ratio definitions.
  const double qc = 0.3, qh = -0.45;  // refrigerator: extracts from cold, dumps into hot
  const double bh = 10.0 / 3.0, bc = 20.0 / 3.0;
  const double sigma = -bc * qc - bh * qh;
  EXPECT_NEAR(efficiency_from_power_entropy(qc, sigma, MachineKind::Refrigerator, bh, bc), qc / -(qc + qh), 1e-14);
  const double qh2 = 1.0, qc2 = -0.6;  // engine
  const double s2 = -2.0 * qc2 - 0.2 * qh2;
  EXPECT_NEAR(efficiency_from_power_entropy(qh2 + qc2, s2, MachineKind::HeatEngine, 0.2, 2.0), (qh2 + qc2) / qh2,
              1e-14);
}

TEST(WeightTransform, HandValueAndBoundary) {
  const Weights w = weight_transform(1.0, 1.0, 1.0, 0.5, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(w.a, 1.25);
  EXPECT_DOUBLE_EQ(w.b, 0.25);
  const Weights z = weight_transform(0.7, 0.0, 0.3, 0.2, 0.9, 2.0);
  EXPECT_DOUBLE_EQ(z.a, 0.7);
  EXPECT_EQ(z.b, 0.0);
  EXPECT_THROW(weight_transform(1.0, 1.0, 1.0, 1.2, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(weight_transform(1.0, 1.0, -1.0, 0.5, 1.0, 1.0), std::invalid_argument);
}

TEST(WeightTransform, PositiveOutputs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(1e-3, 3.0), V(1e-3, 1.0 - 1e-3);
  for (int i = 0; i < 1000; ++i) {
    const double ec = V(rng);
    const Weights w = weight_transform(U(rng), U(rng), U(rng), ec * V(rng), ec, U(rng));
    EXPECT_GT(w.a, 0.0);
    EXPECT_GT(w.b, 0.0);
  }
}

TEST(ParetoEquivalence, ToyFamiliesHaveConsistentJets) {
  for (const auto& f : standard_toy_families())
    for (const Eigen::Vector2d& x : {Eigen::Vector2d(0.1, -0.2), Eigen::Vector2d(-0.4, 0.3)}) {
      expect_jet_consistent(f.power, x);
      expect_jet_consistent(f.efficiency, x);
    }
}

TEST(ParetoEquivalence, StationarityTransfersOnAllFamilies) {
  for (const auto& f : standard_toy_families())
    for (const auto& [a1, b1] : std::vector<std::pair<double, double>>{{1.0, 1.0}, {0.3, 2.0}, {2.0, 0.2}}) {
      const auto r = verify_pareto_equivalence(f, a1, b1);
      EXPECT_TRUE(r.passed) << f.name << ": " << r.message;
      EXPECT_LT(r.grad_f.norm(), 1e-8) << f.name;
      EXPECT_LE(r.hess_f_eigenvalues.maxCoeff(), 1e-8) << f.name;
      EXPECT_LT(r.grad_g_norm, 1e-12) << f.name;
    }
}

TEST(ParetoEquivalence, OffOptimumIsNotStationary) {
  for (const auto& f : standard_toy_families()) {
    auto r = verify_pareto_equivalence(f, 1.0, 1.0);
    r.theta += Eigen::Vector2d(0.05, -0.03);
    r.message.clear();
    const auto off = check_transformed_stationarity(f, r, 1e-8, 1e-8);
    EXPECT_FALSE(off.passed) << f.name;
    EXPECT_GT(off.grad_f.norm(), 1e-4) << f.name;
  }
}

TEST(ParetoEquivalence, JointScalingKeepsArgmax) {
  for (const auto& f : standard_toy_families()) {
    const auto a = maximize_linear_combination(f, 0.8, 1.3, f.start);
    const auto b = maximize_linear_combination(f, 0.8 * 7.5, 1.3 * 7.5, f.start);
    EXPECT_LT((a - b).norm(), 1e-10) << f.name;
  }
}

TEST(Discretize, OttoAndTrapezoidLayouts) {
  const auto o = CycleSpec::otto({1.0, 0.5, 2.0, 0.45}, 1.0, 0.5);
  const auto s = discretize(o, 0.2);
  // 1 isochore + 3 ramp steps + 1 isochore + 3 ramp steps.
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s[0].d, Coupling::Hot);
  EXPECT_DOUBLE_EQ(s[3].u, 0.5);
  EXPECT_DOUBLE_EQ(s[7].u, 1.0);
  double total = 0.0;
  for (const auto& x : s) total += x.dt;
  EXPECT_NEAR(total, o.period(), 1e-14);

  const auto t = CycleSpec::trapezoid(2 * kPi / 10.0);
  const auto ts = discretize(t, 0.98);
  EXPECT_EQ(ts.size(), 11u);
  EXPECT_NEAR(ts.size() * ts[0].dt, 10.0, 1e-12);
  EXPECT_THROW(CycleSpec::otto({1.0, 0.0, 1.0, 1.0}, 1.0, 0.5).validate(), std::invalid_argument);
  EXPECT_THROW(CycleSpec::trapezoid(-1.0).validate(), std::invalid_argument);
}

TEST(Propagator, FoldedRampsMatchStepwiseEvolution) {
  auto cfg = engine();
  std::get<sim::OscillatorModel>(cfg.model).n_fock = 128;
  const auto steps = discretize(CycleSpec::otto({1.3, 0.9, 0.7, 1.1}, 1.0, 0.5), cfg.dt);
  const auto& m = std::get<sim::OscillatorModel>(cfg.model);
  sim::ComplexMatrix a = sim::oscillator_gibbs(m, 0.75, 2.0), b = a;
  double ua = 0.75, ub = 0.75, qh = 0, qc = 0;
  const PeriodPropagator prop(cfg, steps);
  PeriodPropagator::Heats h{};
  for (int k = 0; k < 3; ++k) {
    const auto hk = prop.run(a, ua);
    h.q_hot += hk.q_hot;
    h.q_cold += hk.q_cold;
    for (const auto& s : steps) {
      const auto r = sim::oscillator_evolve_step(b, m, s.u, s.d, ub, s.dt);
      b = r.rho_next;
      ub = s.u;
      qh += r.q_hot;
      qc += r.q_cold;
    }
  }
  EXPECT_EQ(ua, ub);
  // Residual set by where the truncation deficit is booked; shrinks with n_fock.
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(h.q_hot, qh, 1e-10);
  EXPECT_NEAR(h.q_cold, qc, 1e-10);
}

TEST(Evaluate, IdleOscillatorDoesNothing) {
  const auto cfg = engine();
  const auto m = evaluate_steps(cfg, {{0.75, Coupling::None, 5.0}}, 0.5);
  EXPECT_TRUE(m.converged);
  EXPECT_EQ(m.power, 0.0);
  EXPECT_EQ(m.sigma, 0.0);
  EXPECT_EQ(m.ret, 0.0);
  EXPECT_TRUE(std::isnan(m.efficiency));
}

TEST(Evaluate, SuddenQuenchOttoMatchesClosedForm) {
  auto cfg = engine();
  const double gamma = 0.6, wh = 2.0, wc = 1.0;
  const double iso = 60.0 / gamma, ramp = 1e-6;
  const auto m = evaluate_cycle(CycleSpec::otto({iso, ramp, iso, ramp}, 1.0, 0.5), cfg, cfg.dt, 1.0);
  ASSERT_TRUE(m.converged);
  const double nh = bose(0.2 * wh), nc = bose(2.0 * wc);
  // Energy at frequency w2 of a thermal state prepared at w1.
  auto quenched = [](double n, double w1, double w2) { return (n + 0.5) * (w1 * w1 + w2 * w2) / (2.0 * w1); };
  const double q_cold = wc * (nc + 0.5) - quenched(nh, wh, wc);
  const double q_hot = wh * (nh + 0.5) - quenched(nc, wc, wh);
  EXPECT_NEAR(m.q_cold, q_cold, 1e-6 * std::abs(q_cold));
  EXPECT_NEAR(m.q_hot, q_hot, 1e-6 * std::abs(q_hot));
}

TEST(Evaluate, SlowOttoApproachesQuasiStaticSwap) {
  auto cfg = engine();
  const double wh = 2.0, wc = 1.0, iso = 60.0 / 0.6;
  const auto m = evaluate_cycle(CycleSpec::otto({iso, 200.0, iso, 200.0}, 1.0, 0.5), cfg, cfg.dt, 1.0);
  ASSERT_TRUE(m.converged);
  const double nh = bose(0.2 * wh), nc = bose(2.0 * wc);
  EXPECT_NEAR(m.q_hot, wh * (nh - nc), 1e-3 * wh * (nh - nc));
  EXPECT_NEAR(m.q_cold, wc * (nc - nh), 1e-3 * wc * (nh - nc));
  EXPECT_NEAR(m.efficiency, 1.0 - wc / wh, 1e-3);
}

TEST(Evaluate, EntropyRateVanishesForSlowCycles) {
  const auto cfg = engine();
  double last = std::numeric_limits<double>::infinity();
  for (double scale : {5.0, 20.0, 80.0}) {
    const auto m = evaluate_cycle(CycleSpec::otto({scale, scale, scale, scale}, 1.0, 0.5), cfg, cfg.dt, 0.0);
    EXPECT_LT(m.sigma, last);
    last = m.sigma;
  }
  EXPECT_LT(last, 0.02);
}

TEST(Evaluate, SecondLawAndCarnotOnAssortedCycles) {
  const auto q = fridge();
  for (double period : {4.0, 20.0, 100.0, 400.0}) {
    const auto m = evaluate_cycle(CycleSpec::trapezoid(2 * kPi / period), q, q.dt, 1.0);
    ASSERT_TRUE(m.converged);
    EXPECT_GE(m.sigma, -1e-9);
    if (m.power > 0) {
      EXPECT_LE(m.efficiency, 1.0 + 1e-9);
      // Entropy form against the first-law ratio.
      EXPECT_NEAR(m.efficiency, m.q_cold / -(m.q_cold + m.q_hot), 1e-9);
    }
  }
  const auto o = engine();
  for (const auto& t : std::vector<std::array<double, 4>>{{0.3, 0.2, 0.3, 0.2}, {3, 1.5, 3, 1.5}, {10, 0.2, 2, 4}}) {
    const auto m = evaluate_cycle(CycleSpec::otto(t, 1.0, 0.5), o, o.dt, 1.0);
    ASSERT_TRUE(m.converged);
    EXPECT_GE(m.sigma, -1e-9);
    if (m.power > 0) {
      EXPECT_LE(m.efficiency, 0.9 + 1e-9);
      EXPECT_NEAR(m.efficiency, (m.q_hot + m.q_cold) / m.q_hot, 1e-9);
    }
  }
}

TEST(Evaluate, StartPhaseDoesNotMatter) {
  const auto q = fridge();
  auto steps = discretize(CycleSpec::trapezoid(2 * kPi / 60.0), q.dt);
  const auto a = evaluate_steps(q, steps, 1.0);
  std::rotate(steps.begin(), steps.begin() + 17, steps.end());
  const auto b = evaluate_steps(q, steps, 1.0);
  EXPECT_NEAR(a.power, b.power, 1e-7 * std::abs(a.power));
  EXPECT_NEAR(a.sigma, b.sigma, 1e-7 * std::abs(a.sigma));

  const auto o = engine();
  auto os = discretize(CycleSpec::otto({1.0, 0.6, 1.4, 0.8}, 1.0, 0.5), o.dt);
  const auto c = evaluate_steps(o, os, 1.0);
  std::rotate(os.begin(), os.begin() + 3, os.end());
  const auto d = evaluate_steps(o, os, 1.0);
  EXPECT_NEAR(c.power, d.power, 1e-7 * std::abs(c.power));
  EXPECT_NEAR(c.sigma, d.sigma, 1e-7 * std::abs(c.sigma));
}

TEST(Evaluate, PeriodCapRaises) {
  const auto q = fridge();
  EvalOptions opt;
  opt.max_periods = 2;
  EXPECT_THROW(evaluate_cycle(CycleSpec::trapezoid(2 * kPi / 8.0), q, q.dt, 1.0, opt), NonConvergence);
  opt.throw_on_nonconvergence = false;
  EXPECT_FALSE(evaluate_cycle(CycleSpec::trapezoid(2 * kPi / 8.0), q, q.dt, 1.0, opt).converged);
}

TEST(Evaluate, CsvRow) {
  std::ostringstream os;
  CycleMetrics m;
  m.period = 2.0;
  m.converged = true;
  write_cycle_row(os, 1.0, CycleSpec::otto({1, 2, 3, 4}, 1.0, 0.5), m);
  const std::string row = os.str();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(kCycleCsvHeader, kCycleCsvHeader + std::strlen(kCycleCsvHeader), ','));
  EXPECT_EQ(row.substr(0, 7), "1,otto,");
}

TEST(OptimizeTrapezoid, CoolsAtUnitWeight) {
  const auto q = fridge();
  const auto r = optimize_trapezoid(q, 1.0);
  EXPECT_GT(r.metrics.ret, 0.0);
  EXPECT_GT(r.metrics.power, 0.0);
  EXPECT_GE(r.metrics.ret, r.grid_best_return);
  for (double g : r.grid_return) EXPECT_GE(r.metrics.ret, g);
  EXPECT_LE(r.metrics.efficiency, 1.0);
}

TEST(OptimizeTrapezoid, ZeroWeightPrefersSlowCycles) {
  const auto q = fridge();
  const auto r0 = optimize_trapezoid(q, 0.0);
  const auto r1 = optimize_trapezoid(q, 1.0);
  EXPECT_LT(r0.omega, r1.omega);
  EXPECT_LE(r0.omega, r0.grid_omega.back() * (1 + 1e-12));
  EXPECT_LT(r0.metrics.sigma, r1.metrics.sigma);
}

TEST(OptimizeOtto, RefinementRespectsDurationFloor) {
  auto cfg = engine();
  std::get<sim::OscillatorModel>(cfg.model).n_fock = 48;
  OttoOptions opt;
  opt.newton_iterations = 2;
  opt.polish_rounds = 3;
  const auto r = refine_otto(cfg, 1.0, {1e-7, 1e-9, 2.0, 1.0}, opt);
  for (double t : r.durations) EXPECT_GE(t, opt.floor);
  EXPECT_TRUE(r.metrics.converged);
}

TEST(OptimizeOtto, PositivePowerAndLocalOptimum) {
  const auto cfg = engine();
  const auto r = optimize_otto(cfg, 1.0);
  EXPECT_GT(r.metrics.power, 0.0);
  EXPECT_GT(r.metrics.ret, 0.0);
  EXPECT_GE(r.metrics.ret, r.grid_best_return - 0.02);
  for (std::size_t i = 0; i < 4; ++i)
    for (double s : {1.05, 0.95}) {
      auto t = r.durations;
      t[i] = std::max(t[i] * s, 1e-3);
      const auto m = evaluate_cycle(CycleSpec::otto(t, 1.0, 0.5), cfg, cfg.dt, 1.0);
      EXPECT_LE(m.ret, r.metrics.ret + 1e-12) << i << ' ' << s;
    }
}
