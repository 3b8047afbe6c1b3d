#pragma once

#include "qtm/baselines/evaluate.hpp"
#include "qtm/baselines/optimize.hpp"
#include "qtm/baselines/pareto_equivalence.hpp"
#include "qtm/env/presets.hpp"
#include "qtm/nn/distributions.hpp"
#include "qtm/nn/gradcheck.hpp"
#include "qtm/sac/reference.hpp"
#include "qtm/sac/trainer.hpp"
#include "qtm/sim/density_matrix.hpp"
#include "qtm/sim/oscillator.hpp"
#include "qtm/sim/qubit.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace qtm::pareto {

struct CheckOutcome {
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  bool fast = false;
  std::vector<std::string> suites;  ///< empty runs all
  bool sigma_sign_error = false;    ///< mutation: flips the sign of Sigma in the second-law check
};

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Check {
  std::string suite;
  std::string name;
  bool in_fast = true;
  std::function<CheckOutcome(const VerifyOptions&)> run;
};

namespace checks {

using sim::Bath;
using sim::ComplexMatrix;
using sim::Coupling;

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline sim::QubitModel fridge_model() { return std::get<sim::QubitModel>(env::qubit_refrigerator_preset().model); }
inline sim::OscillatorModel engine_model(int n_fock = 128) {
  auto m = std::get<sim::OscillatorModel>(env::oscillator_engine_preset().model);
  m.n_fock = n_fock;
  return m;
}

// ---- physics ----

/// Random qubit controls: trace, Hermiticity, positivity and the discrete
/// first law at every step.
inline CheckOutcome qubit_invariants(int steps) {
  const auto m = fridge_model();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uu(0.0, 0.75);
  ComplexMatrix rho = sim::gibbs_state(sim::qubit_hamiltonian(m, 0.375), m[Bath::Cold].beta);
  double u_prev = 0.375, worst_trace = 0, worst_herm = 0, worst_eig = 0, worst_law = 0;
  for (int i = 0; i < steps; ++i) {
    const double u = uu(rng);
    const auto r = sim::qubit_evolve_step(rho, m, u, Coupling::Both, u_prev, 0.98);
    worst_trace = std::max(worst_trace, std::abs(r.rho_next.trace().real() - 1.0));
    worst_herm = std::max(worst_herm, sim::hermiticity_error(r.rho_next));
    worst_eig = std::min(worst_eig, sim::min_eigenvalue(r.rho_next));
    const double lhs = (r.u_internal_after - r.u_internal_before) - r.quench_work - (r.q_hot + r.q_cold);
    worst_law = std::max(worst_law, std::abs(lhs) / std::max(1.0, std::abs(r.u_internal_after)));
    rho = r.rho_next;
    u_prev = u;
  }
  const bool ok = worst_trace < 1e-9 && worst_herm < 1e-12 && worst_eig >= -1e-9 && worst_law < 1e-7;
  return {ok, "trace " + num(worst_trace) + ", hermiticity " + num(worst_herm) + ", min eigenvalue " +
                  num(worst_eig) + ", first law " + num(worst_law)};
}

inline CheckOutcome oscillator_invariants(int steps) {
  const auto m = engine_model();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uu(0.5, 1.0);
  std::uniform_int_distribution<int> dd(0, 2);
  const Coupling choices[3] = {Coupling::Hot, Coupling::Cold, Coupling::None};
  ComplexMatrix rho = sim::oscillator_gibbs(m, 0.75, m[Bath::Cold].beta);
  double u_prev = 0.75, worst_trace = 0, worst_herm = 0, worst_law = 0;
  sim::StepChecks sc;
  for (int i = 0; i < steps; ++i) {
    const double u = uu(rng);
    sc.positivity = i % 500 == 0;
    const auto r = sim::oscillator_evolve_step(rho, m, u, choices[dd(rng)], u_prev, 0.2, sc);
    worst_trace = std::max(worst_trace, std::abs(r.rho_next.trace().real() - rho.trace().real()));
    worst_herm = std::max(worst_herm, sim::hermiticity_error(r.rho_next));
    const double lhs = (r.u_internal_after - r.u_internal_before) - r.quench_work - (r.q_hot + r.q_cold);
    worst_law = std::max(worst_law, std::abs(lhs) / std::max(1.0, std::abs(r.u_internal_after)));
    rho = r.rho_next;
    u_prev = u;
  }
  const double eig = sim::min_eigenvalue(rho);
  const double total = std::abs(rho.trace().real() - 1.0);
  const bool ok = worst_trace < 1e-9 && worst_herm < 1e-12 && worst_law < 1e-7 && eig >= -1e-9 && total < 1e-7;
  return {ok, "step trace " + num(worst_trace) + ", hermiticity " + num(worst_herm) + ", first law " +
                  num(worst_law) + ", final min eigenvalue " + num(eig)};
}

/// Excited population of the qubit Gibbs state at u = 0 and beta_C against
/// the two-level closed form.
inline CheckOutcome gibbs_population() {
  const auto m = fridge_model();
  const double beta = m[Bath::Cold].beta;
  const ComplexMatrix g = sim::gibbs_state(sim::qubit_hamiltonian(m, 0.0), beta);
  const auto basis = sim::qubit_eigenbasis(m, 0.0);
  const double pe = (basis.excited().adjoint() * g * basis.excited())(0, 0).real();
  const double exact = 1.0 / (1.0 + std::exp(beta * m.gap(0.0)));
  char buf[160];
  std::snprintf(buf, sizeof buf, "p_e = %.9f, closed form %.9f, |diff| %.2e", pe, exact, std::abs(pe - exact));
  return {std::abs(pe - exact) < 1e-6, buf};
}

inline CheckOutcome qubit_thermalization() {
  const auto m = fridge_model();
  const double u = 0.0, step = 0.98;
  const double rate = sim::qubit_rates(m, Bath::Cold, u).total();
  const ComplexMatrix g = sim::gibbs_state(sim::qubit_hamiltonian(m, u), m[Bath::Cold].beta);
  const ComplexMatrix diagonal = sim::gibbs_state(sim::qubit_hamiltonian(m, u), m[Bath::Hot].beta);
  const ComplexMatrix coherent = sim::gibbs_state(sim::qubit_hamiltonian(m, 0.6), m[Bath::Hot].beta);
  double worst = 0.0;
  // Populations relax at the total rate, coherences at half of it.
  for (const auto& [rho0, horizon] : {std::pair{diagonal, 20.0}, std::pair{coherent, 40.0}}) {
    ComplexMatrix rho = rho0;
    const int n = static_cast<int>(std::ceil(horizon / rate / step));
    for (int i = 0; i < n; ++i) rho = sim::qubit_evolve_step(rho, m, u, Coupling::Cold, u, step).rho_next;
    worst = std::max(worst, sim::trace_distance(rho, g));
  }
  return {worst < 1e-6, "trace distance to Gibbs " + num(worst)};
}

inline CheckOutcome oscillator_thermalization() {
  const auto m = engine_model();
  double worst = 0.0;
  for (Bath b : {Bath::Hot, Bath::Cold}) {
    const double u = 0.5;
    const Coupling d = b == Bath::Hot ? Coupling::Hot : Coupling::Cold;
    ComplexMatrix rho = sim::oscillator_gibbs(m, 1.0, b == Bath::Hot ? m[Bath::Cold].beta : m[Bath::Hot].beta);
    double u_prev = 1.0;
    const int n = static_cast<int>(std::ceil(20.0 / m[b].Gamma / 0.2));
    for (int i = 0; i < n; ++i) {
      rho = sim::oscillator_evolve_step(rho, m, u, d, u_prev, 0.2).rho_next;
      u_prev = u;
    }
    worst = std::max(worst, sim::trace_distance(rho, sim::oscillator_gibbs(m, u, m[b].beta)));
  }
  return {worst < 1e-6, "trace distance to Gibbs " + num(worst)};
}

/// Mean entropy production of converged trapezoid and Otto cycles must be
/// non-negative; at least one must be clearly positive so a sign error shows.
inline CheckOutcome second_law(bool flip_sign, bool fast) {
  std::vector<double> sigmas;
  const auto q = env::qubit_refrigerator_preset();
  const std::vector<double> periods = fast ? std::vector<double>{20.0, 120.0} : std::vector<double>{8.0, 20.0, 120.0, 600.0};
  for (double t : periods) {
    const auto m = baselines::evaluate_cycle(baselines::CycleSpec::trapezoid(2.0 * std::numbers::pi / t), q, q.dt, 1.0);
    sigmas.push_back(m.sigma);
  }
  auto o = env::oscillator_engine_preset();
  std::get<sim::OscillatorModel>(o.model).n_fock = 64;
  const std::vector<std::array<double, 4>> strokes =
      fast ? std::vector<std::array<double, 4>>{{3.0, 1.8, 3.5, 1.7}}
           : std::vector<std::array<double, 4>>{{3.0, 1.8, 3.5, 1.7}, {0.5, 0.2, 0.5, 0.2}, {10.0, 5.0, 10.0, 5.0}};
  for (const auto& s : strokes) {
    const auto m = baselines::evaluate_cycle(baselines::CycleSpec::otto(s, o.u_max, o.u_min, baselines::otto_baths(o)),
                                             o, o.dt, 1.0);
    sigmas.push_back(m.sigma);
  }
  double lo = INFINITY, hi = -INFINITY;
  for (double& s : sigmas) {
    if (flip_sign) s = -s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {lo >= -1e-9 && hi > 1e-9, "min Sigma " + num(lo) + ", max Sigma " + num(hi) + " over " +
                                        std::to_string(sigmas.size()) + " cycles"};
}

/// Doubling the Fock dimension changes occupation and heats by < 1e-6.
inline CheckOutcome truncation_doubling() {
  auto run = [](int n) {
    const auto m = engine_model(n);
    ComplexMatrix rho = sim::oscillator_gibbs(m, 0.75, m[Bath::Cold].beta);
    double u_prev = 0.75, qh = 0, qc = 0;
    std::vector<std::pair<double, Coupling>> cycle;
    for (int i = 0; i < 10; ++i) cycle.push_back({1.0, Coupling::Hot});
    for (int i = 0; i < 5; ++i) cycle.push_back({1.0 - 0.1 * (i + 1), Coupling::None});
    for (int i = 0; i < 10; ++i) cycle.push_back({0.5, Coupling::Cold});
    for (int i = 0; i < 5; ++i) cycle.push_back({0.5 + 0.1 * (i + 1), Coupling::None});
    for (int rep = 0; rep < 4; ++rep)
      for (const auto& [u, d] : cycle) {
        const auto r = sim::oscillator_evolve_step(rho, m, u, d, u_prev, 0.2);
        qh += r.q_hot;
        qc += r.q_cold;
        rho = r.rho_next;
        u_prev = u;
      }
    return std::array<double, 3>{sim::mean_occupation(rho), qh, qc};
  };
  const auto a = run(128), b = run(256);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(b[i]));
  return {worst < 1e-6, "relative change 128 -> 256: " + num(worst)};
}

// ---- autodiff ----

inline nn::Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  nn::Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline double backward_if(nn::Tape& t, const nn::Var& loss, bool grad) {
  if (grad) t.backward(loss);
  return loss.scalar();
}

inline CheckOutcome primitive_gradients(int probes) {
  using namespace nn;
  std::mt19937_64 rng(3);
  auto param = [&](const char* n, Eigen::Index r, Eigen::Index c) {
    Parameter p(n, r, c);
    p.value = random_mat(r, c, rng);
    return p;
  };
  Parameter a = param("a", 4, 6), b = param("b", 4, 6), w = param("w", 6, 3), r = param("r", 1, 6),
            s = param("s", 1, 1);
  const Mat wts = random_mat(8, 6, rng);
  const ParamList ps{&a, &b, &w, &r, &s};
  const std::vector<int> idx{2, 0, 5, 1};
  using Builder = std::function<Var(Tape&)>;
  const std::vector<std::pair<std::string, Builder>> cases = {
      {"matmul", [&](Tape& t) { return matmul(t.param(a), t.param(w)); }},
      {"add_row", [&](Tape& t) { return add_row(t.param(a), t.param(r)); }},
      {"add", [&](Tape& t) { return add(t.param(a), t.param(b)); }},
      {"sub", [&](Tape& t) { return sub(t.param(a), t.param(b)); }},
      {"mul", [&](Tape& t) { return mul(t.param(a), t.param(b)); }},
      {"scale_by", [&](Tape& t) { return scale_by(t.param(a), t.param(s)); }},
      {"relu", [&](Tape& t) { return relu(t.param(a)); }},
      {"tanh", [&](Tape& t) { return tanh(t.param(a)); }},
      {"exp", [&](Tape& t) { return exp(t.param(a)); }},
      {"square", [&](Tape& t) { return square(t.param(a)); }},
      {"log_sech2", [&](Tape& t) { return log_sech2(t.param(a)); }},
      {"clamp", [&](Tape& t) { return clamp(t.param(a), -0.5, 0.5); }},
      {"minimum", [&](Tape& t) { return minimum(t.param(a), t.param(b)); }},
      {"row_sum", [&](Tape& t) { return row_sum(t.param(a)); }},
      {"pair_rows", [&](Tape& t) { return pair_rows(t.param(a)); }},
      {"reshape", [&](Tape& t) { return reshape(t.param(a), 8, 3); }},
      {"slice_cols", [&](Tape& t) { return slice_cols(t.param(a), 1, 3); }},
      {"concat_cols", [&](Tape& t) { return concat_cols(t.param(a), t.param(b)); }},
      {"repeat_rows", [&](Tape& t) { return repeat_rows(t.param(a), 2); }},
      {"log_softmax", [&](Tape& t) { return log_softmax_rows(t.param(a)); }},
      {"gather", [&](Tape& t) { return gather_cols(t.param(a), idx); }},
      {"mean", [&](Tape& t) { return mean(t.param(a)); }},
  };
  double worst = 0.0;
  std::string worst_name, short_probes;
  for (const auto& [name, build] : cases) {
    auto loss = [&](Tape& t, bool grad) {
      Var y = build(t);
      Mat full(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < full.rows(); ++i)
        for (Eigen::Index j = 0; j < full.cols(); ++j) full(i, j) = wts(i % 8, j % 6);
      return backward_if(t, sum(mul(y, t.constant(full))), grad);
    };
    const auto res = gradcheck(loss, ps, probes, rng);
    if (res.probes < probes) short_probes += name + " ";
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      worst_name = name;
    }
  }
  std::string d = std::to_string(cases.size()) + " primitives x " + std::to_string(probes) + " probes, max rel error " +
                  num(worst) + " (" + worst_name + ")";
  if (!short_probes.empty()) d += "; too few probes: " + short_probes;
  return {worst < 1e-5 && short_probes.empty(), d};
}

inline CheckOutcome composite_gradients(int probes) {
  using namespace nn;
  std::mt19937_64 rng(4);
  double worst = 0.0;
  int fewest = probes;
  {
    MLP net("mlp", 5, {16, 16}, 3, rng);
    ParamList ps;
    net.collect(ps);
    const Mat x = random_mat(12, 5, rng), target = random_mat(12, 3, rng);
    auto loss = [&](Tape& t, bool g) {
      return backward_if(t, mean(square(sub(net(t, t.constant(x)), t.constant(target)))), g);
    };
    const auto r = gradcheck(loss, ps, probes, rng);
    worst = std::max(worst, r.max_rel_error);
    fewest = std::min(fewest, r.probes);
  }
  {
    ConvStack conv("conv", 3, 8, {4, 6, 5}, rng);
    Linear head("head", 5, 2, rng);
    ParamList ps;
    conv.collect(ps);
    head.collect(ps);
    const Mat x = random_mat(32, 3, rng);
    auto loss = [&](Tape& t, bool g) { return backward_if(t, sum(tanh(head(t, conv(t, t.constant(x))))), g); };
    const auto r = gradcheck(loss, ps, probes, rng);
    worst = std::max(worst, r.max_rel_error);
    fewest = std::min(fewest, r.probes);
  }
  {
    Parameter mu("mu", 6, 2), ls("ls", 6, 2);
    mu.value = random_mat(6, 2, rng);
    ls.value = random_mat(6, 2, rng, 0.5);
    const Mat xi = random_mat(6, 2, rng);
    auto loss = [&](Tape& t, bool g) {
      const auto s = squashed_gaussian(t.param(mu), t.param(ls), xi, 0.0, 0.75);
      return backward_if(t, add(sum(s.log_prob), sum(s.u)), g);
    };
    const auto r = gradcheck(loss, {&mu, &ls}, probes, rng);
    worst = std::max(worst, r.max_rel_error);
    fewest = std::min(fewest, r.probes);
  }
  return {worst < 1e-5 && fewest == probes,
          "dense net, conv stack, squashed Gaussian: max rel error " + num(worst) + ", probes " + std::to_string(fewest)};
}

/// Full-size policy and critic of both machines.
inline CheckOutcome architecture_gradients(int probes) {
  using namespace sac;
  struct Case {
    ActionSpace sp;
    std::vector<Eigen::Index> critic_hidden;
  };
  double worst = 0.0;
  int fewest = probes;
  for (const auto& cs : {Case{{0.0, 0.75, {Coupling::Both}}, {256, 256}},
                         Case{{0.5, 1.0, {Coupling::Hot, Coupling::Cold, Coupling::None}}, {256, 128}}}) {
    SacConfig cfg;
    cfg.critic_hidden = cs.critic_hidden;
    std::mt19937_64 rng(19);
    PolicyNet pol("policy", cs.sp, 128, cfg.conv_channels, cfg.policy_hidden, rng);
    CriticNet cri("critic", cs.sp, 128, cfg.conv_channels, cfg.critic_hidden, rng);
    const std::size_t B = 2;
    std::vector<double> u(B * 128);
    std::vector<std::uint8_t> d(B * 128);
    std::uniform_real_distribution<double> U(cs.sp.u_min, cs.sp.u_max);
    std::uniform_int_distribution<int> D(0, static_cast<int>(cs.sp.n_discrete()) - 1);
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = U(rng);
      d[i] = static_cast<std::uint8_t>(D(rng));
    }
    const Mat s = encode_states(u, d, B, 128, cs.sp), l = encode_last(u, d, B, 128, cs.sp);
    auto pol_loss = [&](nn::Tape& t, bool grad) {
      const auto h = pol(t, s, l);
      const auto y = nn::sum(nn::add(nn::tanh(nn::add(h.mu, h.log_sigma)), nn::log_softmax_rows(h.logits)));
      return backward_if(t, y, grad);
    };
    auto pp = pol.parameters();
    const auto r1 = nn::gradcheck(pol_loss, pp, probes, rng);
    Mat un(B, 1);
    un << 0.3, -0.7;
    auto cri_loss = [&](nn::Tape& t, bool grad) {
      const auto q = cri.values(t, cri.features(t, s), t.constant(un));
      return backward_if(t, nn::sum(nn::square(q)), grad);
    };
    auto cp = cri.parameters();
    const auto r2 = nn::gradcheck(cri_loss, cp, probes, rng);
    worst = std::max({worst, r1.max_rel_error, r2.max_rel_error});
    fewest = std::min({fewest, r1.probes, r2.probes});
  }
  return {worst < 1e-5 && fewest == probes,
          "policy and critic of both machines: max rel error " + num(worst) + ", probes " + std::to_string(fewest)};
}

// ---- sac ----

inline sac::SacConfig tiny_agent_config() {
  sac::SacConfig c;
  c.conv_channels = {2};
  c.policy_hidden = {3};
  c.critic_hidden = {3};
  c.batch_size = 2;
  c.buffer_capacity = 16;
  c.seed = 11;
  return c;
}

inline sac::SacConfig toy_agent_config(std::uint64_t seed) {
  sac::SacConfig c;
  c.conv_channels = {8, 8, 8};
  c.policy_hidden = {32};
  c.critic_hidden = {32, 32};
  c.batch_size = 64;
  c.buffer_capacity = 20000;
  c.lr = 1e-3;
  c.random_steps = 1000;
  c.first_update = 500;
  c.n_updates = 50;
  c.log_every = 500;
  c.entropy_c = {0.0, -3.5, 3000.0};
  c.entropy_d = {std::log(2.0), 0.01, 3000.0};
  c.seed = seed;
  return c;
}

/// Critic targets and policy loss of a small randomized agent against the
/// scalar reference evaluation.
inline CheckOutcome hand_fixtures() {
  using namespace sac;
  const ActionSpace sp{0.0, 0.75, {Coupling::Hot, Coupling::Cold}};
  SacAgent agent(tiny_agent_config(), sp, 2, 0.9);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.7);
  for (auto* p : agent.all_parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = n(rng);
  agent.set_alphas(0.3, 0.2);
  auto hist = [](ControlAction a, ControlAction b) {
    HistoryState h(2, a);
    h.push(a);
    h.push(b);
    return h;
  };
  std::vector<Transition> tr{{hist({0.1, Coupling::Hot}, {0.6, Coupling::Cold}), {0.25, Coupling::Hot}, 0.4, 0.9},
                             {hist({0.7, Coupling::Cold}, {0.05, Coupling::Cold}), {0.5, Coupling::Cold}, -0.2, 0.3}};
  ReplayBuffer buf(16, 2, sp.discrete);
  for (const auto& t : tr) buf.push(t);
  const Batch batch = buf.gather({0, 1});
  ReferenceNetworks o{sp};
  double worst = 0.0;

  std::mt19937_64 nrng(9);
  const Mat xi = agent.normal_noise(2, nrng);
  const auto y = agent.critic_targets(batch, xi);
  for (std::size_t r = 0; r < 2; ++r) {
    const HistoryState s1 = tr[r].next_state();
    const auto pol = o.policy(agent.policy(), s1);
    double vp = 0.0, vn = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      const auto [u, lpc] = o.sample(pol.mu[d], pol.ls[d], xi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)));
      const double qp = std::min(o.q(agent.target(kPower1), s1, u, d), o.q(agent.target(kPower2), s1, u, d));
      const double qn = std::min(o.q(agent.target(kNegSigma1), s1, u, d), o.q(agent.target(kNegSigma2), s1, u, d));
      const double pd = std::exp(pol.logp[d]);
      vp += pd * (qp - 0.3 * lpc - 0.2 * pol.logp[d]);
      vn += pd * (qn - 0.3 * lpc - 0.2 * pol.logp[d]);
    }
    worst = std::max(worst, std::abs(y.power(static_cast<Eigen::Index>(r), 0) - (tr[r].r_power + 0.9 * vp)));
    worst = std::max(worst, std::abs(y.neg_sigma(static_cast<Eigen::Index>(r), 0) - (-tr[r].r_sigma + 0.9 * vn)));
  }

  const Mat xi2 = agent.normal_noise(2, nrng);
  for (double c : {1.0, 0.35, 0.0}) {
    const auto res = agent.policy_loss(batch, xi2, c, false);
    double total = 0.0;
    for (std::size_t r = 0; r < 2; ++r) {
      const auto& s = tr[r].state;
      const auto pol = o.policy(agent.policy(), s);
      for (std::size_t d = 0; d < 2; ++d) {
        const auto [u, lpc] =
            o.sample(pol.mu[d], pol.ls[d], xi2(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)));
        const double q1 = c * o.q(agent.critic(kPower1), s, u, d) + (1 - c) * o.q(agent.critic(kNegSigma1), s, u, d);
        const double q2 = c * o.q(agent.critic(kPower2), s, u, d) + (1 - c) * o.q(agent.critic(kNegSigma2), s, u, d);
        total += std::exp(pol.logp[d]) * (0.2 * pol.logp[d] + 0.3 * lpc - std::min(q1, q2));
      }
    }
    worst = std::max(worst, std::abs(res.loss - total / 2));
  }
  return {worst < 1e-12, "critic targets and policy loss vs reference: max abs error " + num(worst)};
}

inline CheckOutcome temperature_sign() {
  using namespace sac;
  SacAgent a(tiny_agent_config(), {0.0, 0.75, {Coupling::Hot, Coupling::Cold}}, 2, 0.9);
  const double c0 = a.alpha_c(), d0 = a.alpha_d();
  a.temperature_step(1.0, 1.0, 0.0, 0.0);  // entropies above target
  const double c1 = a.alpha_c(), d1 = a.alpha_d();
  a.temperature_step(-1.0, -1.0, 0.0, 0.0);
  const bool ok = c1 < c0 && d1 < d0 && std::abs(a.alpha_c() - c0) < 1e-12 && std::abs(a.alpha_d() - d0) < 1e-12;
  return {ok, "alpha_c " + num(c0) + " -> " + num(c1) + ", alpha_d " + num(d0) + " -> " + num(d1)};
}

inline CheckOutcome bandit_converges(std::uint64_t steps) {
  sac::BanditTask task(0.7, 8, 0.9);
  sac::Trainer tr(toy_agent_config(21), task);
  tr.run(steps);
  std::mt19937_64 unused(0);
  const auto a = tr.agent().act(task.history(), false, unused);
  return {std::abs(a.u - 0.70) <= 0.05, "deterministic action " + num(a.u) + " after " + std::to_string(steps) +
                                            " steps (target 0.70 +- 0.05)"};
}

inline CheckOutcome alternation_solved(std::uint64_t steps) {
  sac::AlternationTask task(8, 0.9);
  sac::Trainer tr(toy_agent_config(22), task);
  tr.run(steps);
  const auto roll = sac::deterministic_rollout(tr.agent(), task, 64);
  int good = 0;
  for (const auto& r : roll.rewards) good += r.r_power == 1.0;
  return {good == 64, std::to_string(good) + "/64 rewarded steps after " + std::to_string(steps) + " steps"};
}

// ---- pareto ----

inline CheckOutcome pareto_equivalence() {
  const std::vector<std::pair<double, double>> weights{{1.0, 0.5}, {1.0, 2.0}, {0.3, 1.0}};
  double worst_g = 0.0, worst_h = -INFINITY;
  std::string failures;
  int n = 0;
  for (const auto& f : baselines::standard_toy_families())
    for (const auto& [a1, b1] : weights) {
      const auto r = baselines::verify_pareto_equivalence(f, a1, b1, 1e-8, 1e-8);
      ++n;
      worst_g = std::max(worst_g, r.grad_f.norm());
      worst_h = std::max(worst_h, r.hess_f_eigenvalues.maxCoeff());
      if (!r.passed) failures += f.name + "(" + num(a1) + "," + num(b1) + "): " + r.message;
    }
  std::string d = std::to_string(n) + " cases, max |grad F| " + num(worst_g) + ", max Hessian eigenvalue " + num(worst_h);
  if (!failures.empty()) d += "; " + failures;
  return {failures.empty(), d};
}

// ---- baselines ----

inline CheckOutcome trapezoid_cools() {
  const auto cfg = env::qubit_refrigerator_preset();
  const auto r = baselines::optimize_trapezoid(cfg, 1.0);
  return {r.metrics.converged && r.metrics.ret > 0.0,
          "optimized trapezoid at c=1: return " + num(r.metrics.ret) + ", period " + num(r.metrics.period)};
}

inline CheckOutcome otto_produces_power() {
  const auto cfg = env::oscillator_engine_preset();
  const auto r = baselines::optimize_otto(cfg, 1.0);
  std::string d = "optimized Otto at c=1: return " + num(r.metrics.ret) + ", durations (";
  for (int i = 0; i < 4; ++i) d += (i ? ", " : "") + num(r.durations[static_cast<std::size_t>(i)]);
  return {r.metrics.converged && r.metrics.ret > 0.0, d + ")"};
}

// ---- reproducibility ----

/// Two identical short training runs on a machine give bit-identical logs.
inline CheckOutcome training_reproducible(const env::EnvConfig& ecfg, std::uint64_t steps) {
  auto run = [&] {
    env::EnvConfig e = ecfg;
    e.history_length = 16;
    e.penalty.window = std::min<std::size_t>(e.penalty.window, 16);
    e.penalty.min_count = std::min(e.penalty.min_count, 3);
    sac::MachineTask task(e);
    sac::SacConfig c = toy_agent_config(7);
    c.conv_channels = {4, 4, 4, 4};
    c.policy_hidden = {8};
    c.critic_hidden = {8};
    c.batch_size = 16;
    c.random_steps = steps / 3;
    c.first_update = steps / 4;
    c.n_updates = 10;
    c.log_every = 20;
    sac::Trainer tr(c, task);
    std::ostringstream log;
    tr.set_log(&log);
    tr.run(steps);
    return log.str();
  };
  const std::string a = run(), b = run();
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {a == b && lines > 2, std::to_string(lines - 1) + " log rows, " + (a == b ? "identical" : "different")};
}

}  // namespace checks

inline std::vector<Check> all_checks() {
  using namespace checks;
  std::vector<Check> c;
  c.push_back({"physics", "qubit_invariants", true, [](const VerifyOptions& o) { return qubit_invariants(o.fast ? 2000 : 10000); }});
  c.push_back({"physics", "oscillator_invariants", true, [](const VerifyOptions& o) { return oscillator_invariants(o.fast ? 300 : 10000); }});
  c.push_back({"physics", "gibbs_population", true, [](const VerifyOptions&) { return gibbs_population(); }});
  c.push_back({"physics", "qubit_thermalization", true, [](const VerifyOptions&) { return qubit_thermalization(); }});
  c.push_back({"physics", "oscillator_thermalization", false, [](const VerifyOptions&) { return oscillator_thermalization(); }});
  c.push_back({"physics", "second_law", true, [](const VerifyOptions& o) { return second_law(o.sigma_sign_error, o.fast); }});
  c.push_back({"physics", "truncation_doubling", false, [](const VerifyOptions&) { return truncation_doubling(); }});
  c.push_back({"autodiff", "primitives", true, [](const VerifyOptions&) { return primitive_gradients(100); }});
  c.push_back({"autodiff", "composites", true, [](const VerifyOptions&) { return composite_gradients(100); }});
  c.push_back({"autodiff", "architectures", false, [](const VerifyOptions&) { return architecture_gradients(100); }});
  c.push_back({"sac", "hand_fixtures", true, [](const VerifyOptions&) { return hand_fixtures(); }});
  c.push_back({"sac", "temperature_sign", true, [](const VerifyOptions&) { return temperature_sign(); }});
  c.push_back({"sac", "bandit", false, [](const VerifyOptions&) { return bandit_converges(20000); }});
  c.push_back({"sac", "alternation", false, [](const VerifyOptions&) { return alternation_solved(15000); }});
  c.push_back({"pareto", "equivalence", true, [](const VerifyOptions&) { return pareto_equivalence(); }});
  c.push_back({"baselines", "trapezoid_c1", false, [](const VerifyOptions&) { return trapezoid_cools(); }});
  c.push_back({"baselines", "otto_c1", false, [](const VerifyOptions&) { return otto_produces_power(); }});
  c.push_back({"reproducibility", "qubit_training", true, [](const VerifyOptions& o) {
                 return training_reproducible(env::qubit_refrigerator_preset(), o.fast ? 200 : 600);
               }});
  c.push_back({"reproducibility", "oscillator_training", false, [](const VerifyOptions&) {
                 return training_reproducible(env::oscillator_engine_preset(), 400);
               }});
  return c;
}

inline std::vector<std::string> suite_names() {
  return {"physics", "autodiff", "sac", "pareto", "baselines", "reproducibility"};
}

/// Runs the selected checks; exceptions count as failures.
inline std::vector<CheckResult> verify(const VerifyOptions& opt, std::ostream* progress = nullptr) {
  for (const auto& s : opt.suites) {
    const auto names = suite_names();
    if (std::find(names.begin(), names.end(), s) == names.end()) throw std::invalid_argument("verify: unknown suite '" + s + "'");
  }
  std::vector<CheckResult> out;
  for (const auto& c : all_checks()) {
    if (opt.fast && !c.in_fast) continue;
    if (!opt.suites.empty() && std::find(opt.suites.begin(), opt.suites.end(), c.suite) == opt.suites.end()) continue;
    CheckResult r{c.suite, c.name, false, "", 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto o = c.run(opt);
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress)
      *progress << (r.passed ? "PASS " : "FAIL ") << r.suite << '/' << r.name << " (" << checks::num(r.seconds)
                << " s): " << r.detail << std::endl;
    out.push_back(r);
  }
  return out;
}

}  // namespace qtm::pareto
