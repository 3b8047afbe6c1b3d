#include "qtm/nn/gradcheck.hpp"
#include "qtm/sac/reference.hpp"
#include "qtm/sac/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace qtm;
using namespace qtm::sac;
using nn::Mat;

namespace {

SacConfig tiny_config() {
  SacConfig c;
  c.conv_channels = {2};
  c.policy_hidden = {3};
  c.critic_hidden = {3};
  c.batch_size = 2;
  c.buffer_capacity = 16;
  c.seed = 11;
  return c;
}

SacConfig toy_config(std::uint64_t seed) {
  SacConfig c;
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

const ActionSpace kTwo{0.0, 0.75, {Coupling::Hot, Coupling::Cold}};

using Oracle = ReferenceNetworks;

HistoryState make_history(std::initializer_list<ControlAction> acts) {
  HistoryState h(acts.size(), *acts.begin());
  for (const auto& a : acts) h.push(a);
  return h;
}

void randomize(const nn::ParamList& ps, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto* p : ps)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = n(rng);
}

double checksum(const nn::ParamList& ps) {
  double s = 0.0;
  for (auto* p : ps) s += p->value.sum() + 1e-3 * p->value.cwiseAbs().sum();
  return s;
}

struct Fixture {
  SacAgent agent;
  ReplayBuffer buf;
  std::vector<Transition> tr;
  Batch batch;

  explicit Fixture(double gamma = 0.9) : agent(tiny_config(), kTwo, 2, gamma), buf(16, 2, kTwo.discrete) {
    std::mt19937_64 rng(5);
    randomize(agent.all_parameters(), rng, 0.7);
    agent.set_alphas(0.3, 0.2);
    tr.push_back({make_history({{0.1, Coupling::Hot}, {0.6, Coupling::Cold}}), {0.25, Coupling::Hot}, 0.4, 0.9});
    tr.push_back({make_history({{0.7, Coupling::Cold}, {0.05, Coupling::Cold}}), {0.5, Coupling::Cold}, -0.2, 0.3});
    for (const auto& t : tr) buf.push(t);
    batch = buf.gather({0, 1});
  }
};

}  // namespace

TEST(Schedules, EndpointsAndMidpoint) {
  const auto q = qubit_sac_preset(0.6);
  Schedules s(q);
  EXPECT_DOUBLE_EQ(s.target_c(0), 0.0);
  EXPECT_NEAR(s.target_c(440000), -3.5 + 3.5 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(s.target_c(440000), -2.2124, 5e-5);
  EXPECT_NEAR(s.target_c(100000000), -3.5, 1e-12);
  EXPECT_DOUBLE_EQ(s.c(170000), 0.8);
  EXPECT_NEAR(s.c(0), 1.0, 1e-3);
  EXPECT_NEAR(s.c(2000000), 0.6, 1e-12);
  const auto o = oscillator_sac_preset(0.5);
  Schedules so(o);
  EXPECT_DOUBLE_EQ(so.c(0), 0.5);
  EXPECT_DOUBLE_EQ(so.c(300000), 0.5);
  EXPECT_DOUBLE_EQ(so.target_d(0), std::log(3.0));
  EXPECT_DOUBLE_EQ(so.target_c(0), -0.72);
}

TEST(Presets, TableValues) {
  const auto q = qubit_sac_preset(1.0);
  EXPECT_EQ(q.batch_size, 512u);
  EXPECT_EQ(q.buffer_capacity, 280000u);
  EXPECT_DOUBLE_EQ(q.lr, 0.0003);
  EXPECT_DOUBLE_EQ(q.polyak, 0.995);
  EXPECT_EQ(q.conv_channels, (std::vector<Eigen::Index>{64, 64, 64, 128, 128, 128, 128}));
  EXPECT_EQ(q.critic_hidden, (std::vector<Eigen::Index>{256, 256}));
  EXPECT_EQ(q.random_steps, 5000u);
  EXPECT_EQ(q.first_update, 1000u);
  EXPECT_EQ(q.n_updates, 50u);
  const auto o = oscillator_sac_preset(1.0);
  EXPECT_EQ(o.buffer_capacity, 160000u);
  EXPECT_EQ(o.critic_hidden, (std::vector<Eigen::Index>{256, 128}));
}

TEST(Replay, FifoEviction) {
  ReplayBuffer b(10, 4, {Coupling::Both});
  for (int i = 0; i < 13; ++i) {
    HistoryState h(4, {0.0, Coupling::Both});
    b.push({h, {static_cast<double>(i), Coupling::Both}, static_cast<double>(i), 0.0});
  }
  ASSERT_EQ(b.size(), 10u);
  std::set<double> present;
  for (std::size_t i = 0; i < b.size(); ++i) present.insert(b.at(i).r_power);
  for (int i = 0; i < 3; ++i) EXPECT_FALSE(present.count(i));
  for (int i = 3; i < 13; ++i) EXPECT_TRUE(present.count(i));
  EXPECT_EQ(b.at(0).r_power, 3.0);
  EXPECT_EQ(b.at(9).r_power, 12.0);
}

TEST(Replay, SamplingWithoutReplacementIsUniform) {
  ReplayBuffer b(50, 2, {Coupling::Both});
  for (int i = 0; i < 50; ++i) b.push({HistoryState(2, {0.0, Coupling::Both}), {0.1, Coupling::Both}, 1.0 * i, 0});
  std::mt19937_64 rng(3);
  std::vector<int> counts(50, 0);
  const int rounds = 4000;
  for (int r = 0; r < rounds; ++r) {
    const auto idx = b.sample_indices(20, rng);
    std::set<std::size_t> s(idx.begin(), idx.end());
    ASSERT_EQ(s.size(), 20u);
    for (auto i : idx) ++counts[i];
  }
  // Each index appears with probability 20/50 per round.
  const double p = 0.4, mean = rounds * p, sd = std::sqrt(rounds * p * (1 - p));
  for (int c : counts) EXPECT_LT(std::abs(c - mean), 5 * sd);
  EXPECT_THROW(b.sample_indices(51, rng), std::invalid_argument);
}

TEST(Replay, NextStateIsShiftedHistory) {
  Fixture f;
  const Batch& b = f.batch;
  for (std::size_t r = 0; r < 2; ++r) {
    const HistoryState nx = f.tr[r].next_state();
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(b.next_u[r * 2 + k], nx[k].u);
      EXPECT_EQ(kTwo.discrete[b.next_d[r * 2 + k]], nx[k].d);
    }
  }
}

TEST(Policy, DegenerateDiscreteAndDeterminism) {
  SacAgent a(tiny_config(), {0.0, 0.75, {Coupling::Both}}, 2, 0.9);
  std::mt19937_64 rng(1);
  const auto h = make_history({{0.1, Coupling::Both}, {0.2, Coupling::Both}});
  for (int i = 0; i < 100; ++i) {
    const auto x = a.act(h, true, rng);
    EXPECT_EQ(x.d, Coupling::Both);
    EXPECT_GE(x.u, 0.0);
    EXPECT_LE(x.u, 0.75);
  }
  EXPECT_EQ(a.act(h, false, rng), a.act(h, false, rng));
  EXPECT_EQ(a.alpha_d(), 0.0);
}

TEST(Policy, DiscreteFrequenciesMatchProbabilities) {
  SacConfig cfg = tiny_config();
  SacAgent a(cfg, {0.0, 1.0, {Coupling::Hot, Coupling::Cold, Coupling::None}}, 2, 0.9);
  std::mt19937_64 rng(2);
  randomize(a.policy().parameters(), rng, 0.8);
  const auto h = make_history({{0.3, Coupling::Hot}, {0.9, Coupling::None}});
  const auto p = a.distribution(h).probs;
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  const int n = 100000;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) {
    const auto x = a.act(h, true, rng);
    ++counts[x.d == Coupling::Hot ? 0 : x.d == Coupling::Cold ? 1 : 2];
  }
  for (int k = 0; k < 3; ++k) {
    const double sd = std::sqrt(n * p(k) * (1 - p(k)));
    EXPECT_LT(std::abs(counts[k] - n * p(k)), 3 * sd) << k;
  }
}

TEST(CriticTarget, MatchesHandEvaluation) {
  Fixture f(0.9);
  Oracle o{kTwo};
  std::mt19937_64 rng(9);
  const Mat xi = f.agent.normal_noise(2, rng);
  const auto y = f.agent.critic_targets(f.batch, xi);
  for (std::size_t r = 0; r < 2; ++r) {
    const HistoryState s1 = f.tr[r].next_state();
    const auto pol = o.policy(f.agent.policy(), s1);
    double vp = 0.0, vn = 0.0;
    for (std::size_t d = 0; d < 2; ++d) {
      const auto [u, lpc] = o.sample(pol.mu[d], pol.ls[d], xi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)));
      const double qp = std::min(o.q(f.agent.target(kPower1), s1, u, d), o.q(f.agent.target(kPower2), s1, u, d));
      const double qn =
          std::min(o.q(f.agent.target(kNegSigma1), s1, u, d), o.q(f.agent.target(kNegSigma2), s1, u, d));
      const double pd = std::exp(pol.logp[d]);
      vp += pd * (qp - 0.3 * lpc - 0.2 * pol.logp[d]);
      vn += pd * (qn - 0.3 * lpc - 0.2 * pol.logp[d]);
    }
    EXPECT_NEAR(y.power(static_cast<Eigen::Index>(r), 0), f.tr[r].r_power + 0.9 * vp, 1e-12);
    EXPECT_NEAR(y.neg_sigma(static_cast<Eigen::Index>(r), 0), -f.tr[r].r_sigma + 0.9 * vn, 1e-12);
  }
}

TEST(CriticTarget, ZeroDiscountGivesReward) {
  Fixture f(0.0);
  std::mt19937_64 rng(1);
  const auto y = f.agent.critic_targets(f.batch, f.agent.normal_noise(2, rng));
  EXPECT_EQ(y.power(0, 0), 0.4);
  EXPECT_EQ(y.power(1, 0), -0.2);
  EXPECT_EQ(y.neg_sigma(0, 0), -0.9);
  EXPECT_EQ(y.neg_sigma(1, 0), -0.3);
}

TEST(CriticTarget, DegenerateDropsDiscreteTerm) {
  const ActionSpace one{0.0, 0.75, {Coupling::Both}};
  SacAgent a(tiny_config(), one, 2, 0.9);
  std::mt19937_64 rng(4);
  randomize(a.all_parameters(), rng, 0.5);
  ReplayBuffer b(4, 2, one.discrete);
  const auto h = make_history({{0.1, Coupling::Both}, {0.2, Coupling::Both}});
  b.push({h, {0.3, Coupling::Both}, 0.5, 0.1});
  const Batch bt = b.gather({0});
  const Mat xi = Mat::Constant(1, 1, 0.4);
  a.set_alphas(0.3, 5.0);  // alpha_D must be ignored
  const auto y = a.critic_targets(bt, xi);
  Oracle o{one};
  const auto s1 = b.at(0).next_state();
  const auto pol = o.policy(a.policy(), s1);
  EXPECT_EQ(pol.logp[0], 0.0);
  const auto [u, lpc] = o.sample(pol.mu[0], pol.ls[0], 0.4);
  const double qp = std::min(o.q(a.target(kPower1), s1, u, 0), o.q(a.target(kPower2), s1, u, 0));
  EXPECT_NEAR(y.power(0, 0), 0.5 + 0.9 * (qp - 0.3 * lpc), 1e-12);
}

TEST(CriticLoss, ZeroAtTargetAndOffsetSquared) {
  Fixture f;
  Oracle o{kTwo};
  Mat y(2, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto d = static_cast<std::size_t>(kTwo.index_of(f.tr[r].action.d));
    y(static_cast<Eigen::Index>(r), 0) = o.q(f.agent.critic(kPower1), f.tr[r].state, f.tr[r].action.u, d);
  }
  EXPECT_NEAR(f.agent.critic_loss(kPower1, f.batch, y, false), 0.0, 1e-24);
  const Mat shifted = y.array() + 0.37;
  EXPECT_NEAR(f.agent.critic_loss(kPower1, f.batch, shifted, false), 0.37 * 0.37, 1e-14);
}

TEST(CriticLoss, GradientMatchesFiniteDifferences) {
  Fixture f;
  Mat y(2, 1);
  y << 0.3, -1.1;
  const auto ps = f.agent.critic(kNegSigma1).parameters();
  auto loss = [&](nn::Tape&, bool grad) {
    if (grad) nn::zero_grads(ps);
    return f.agent.critic_loss(kNegSigma1, f.batch, y, grad);
  };
  std::mt19937_64 rng(3);
  const auto res = nn::gradcheck(loss, ps, 100, rng);
  EXPECT_EQ(res.probes, 100);
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(PolicyLoss, MatchesHandEvaluation) {
  Fixture f;
  Oracle o{kTwo};
  std::mt19937_64 rng(12);
  const Mat xi = f.agent.normal_noise(2, rng);
  for (double c : {1.0, 0.35, 0.0}) {
    const auto res = f.agent.policy_loss(f.batch, xi, c, false);
    double total = 0.0, hd = 0.0, hc = 0.0;
    for (std::size_t r = 0; r < 2; ++r) {
      const auto& s = f.tr[r].state;
      const auto pol = o.policy(f.agent.policy(), s);
      for (std::size_t d = 0; d < 2; ++d) {
        const auto [u, lpc] =
            o.sample(pol.mu[d], pol.ls[d], xi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)));
        const double q1 = c * o.q(f.agent.critic(kPower1), s, u, d) + (1 - c) * o.q(f.agent.critic(kNegSigma1), s, u, d);
        const double q2 = c * o.q(f.agent.critic(kPower2), s, u, d) + (1 - c) * o.q(f.agent.critic(kNegSigma2), s, u, d);
        const double pd = std::exp(pol.logp[d]);
        total += pd * (0.2 * pol.logp[d] + 0.3 * lpc - std::min(q1, q2));
        hd -= pd * pol.logp[d];
        hc -= pd * lpc;
      }
    }
    EXPECT_NEAR(res.loss, total / 2, 1e-12) << c;
    EXPECT_NEAR(res.entropy_d, hd / 2, 1e-12);
    EXPECT_NEAR(res.entropy_c, hc / 2, 1e-12);
    EXPECT_LT(res.min_prob_sum_error, 1e-12);
  }
}

TEST(PolicyLoss, PowerOnlyAtUnitWeight) {
  Fixture f;
  std::mt19937_64 rng(13);
  const Mat xi = f.agent.normal_noise(2, rng);
  const double before = f.agent.policy_loss(f.batch, xi, 1.0, false).loss;
  randomize(f.agent.critic(kNegSigma1).parameters(), rng, 3.0);
  randomize(f.agent.critic(kNegSigma2).parameters(), rng, 3.0);
  EXPECT_EQ(f.agent.policy_loss(f.batch, xi, 1.0, false).loss, before);
  EXPECT_NE(f.agent.policy_loss(f.batch, xi, 0.5, false).loss, before);
}

TEST(PolicyLoss, GradientMatchesFiniteDifferences) {
  Fixture f;
  std::mt19937_64 rng(14);
  const Mat xi = f.agent.normal_noise(2, rng);
  const auto ps = f.agent.policy().parameters();
  auto loss = [&](nn::Tape&, bool grad) {
    if (grad) nn::zero_grads(ps);
    return f.agent.policy_loss(f.batch, xi, 0.6, grad).loss;
  };
  const auto res = nn::gradcheck(loss, ps, 100, rng);
  EXPECT_EQ(res.probes, 100);
  EXPECT_LT(res.max_rel_error, 1e-5);
}

// With zero temperatures and a quadratic critic, descending the policy loss
// moves the squashed mean onto the critic's maximizer.
TEST(PolicyLoss, QuadraticCriticDrivesMeanToOptimum) {
  const double a = 0.0, b = 0.75, target = 0.6;
  nn::Parameter mu("mu", 1, 1), ls("ls", 1, 1);
  ls.value(0, 0) = -4.0;
  nn::Adam opt({&mu}, {0.01});
  std::mt19937_64 rng(15);
  std::normal_distribution<double> nd;
  for (int it = 0; it < 4000; ++it) {
    opt.zero_grad();
    nn::Tape t;
    Mat xi(16, 1);
    for (Eigen::Index i = 0; i < 16; ++i) xi(i, 0) = nd(rng);
    const auto m = nn::repeat_rows(t.param(mu), 16);
    const auto s = nn::repeat_rows(t.param(ls, false), 16);
    const auto smp = nn::squashed_gaussian(m, s, xi, a, b);
    const auto d = nn::add_scalar(smp.u, -target);
    t.backward(nn::mean(nn::square(d)));  // -Q
    opt.step();
  }
  // The maximizer of E[-(u - u*)^2] is near the preimage of u* for small sigma.
  EXPECT_NEAR(nn::squashed_mean(mu.value(0, 0), a, b), target, 0.02);
  EXPECT_NEAR(mu.value(0, 0), std::atanh(2 * target / b - 1), 0.1);
}

TEST(Temperature, SignAndFixedPoint) {
  Fixture f;
  f.agent.set_alphas(0.5, 0.5);
  f.agent.temperature_step(0.3, -1.0, 0.3, -1.0);
  EXPECT_DOUBLE_EQ(f.agent.alpha_c(), 0.5);
  EXPECT_DOUBLE_EQ(f.agent.alpha_d(), 0.5);
  f.agent.temperature_step(0.6, 0.0, 0.3, -1.0);  // entropies above target
  EXPECT_LT(f.agent.alpha_c(), 0.5);
  EXPECT_LT(f.agent.alpha_d(), 0.5);
  f.agent.set_alphas(0.5, 0.5);
  f.agent.temperature_step(0.1, -2.0, 0.3, -1.0);
  EXPECT_GT(f.agent.alpha_c(), 0.5);
  EXPECT_GT(f.agent.alpha_d(), 0.5);

  SacAgent deg(tiny_config(), {0.0, 0.75, {Coupling::Both}}, 2, 0.9);
  deg.temperature_step(0.0, 0.0, 1.0, -1.0);
  EXPECT_EQ(deg.alpha_d(), 0.0);
}

TEST(Entropy, DecompositionWithUniformDiscreteAndFixedSigma) {
  SacConfig cfg = tiny_config();
  SacAgent a(cfg, kTwo, 2, 0.9);
  auto& out = a.policy().head.layers.back();
  out.weight.value.setZero();
  out.bias.value << 0.0, 0.0, 0.3, -0.4, std::log(0.5), std::log(0.8);
  const int n = 4000;
  ReplayBuffer b(n, 2, kTwo.discrete);
  for (int i = 0; i < n; ++i) b.push({make_history({{0.1, Coupling::Hot}, {0.2, Coupling::Cold}}), {0.3, Coupling::Hot}, 0, 0});
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const Batch bt = b.gather(idx);
  std::mt19937_64 rng(16);
  const auto res = a.policy_loss(bt, a.normal_noise(n, rng), 1.0, false);
  EXPECT_NEAR(res.entropy_d, std::log(2.0), 1e-12);

  // Differential entropy of a squashed Gaussian by quadrature over zeta.
  auto entropy = [](double mu, double sigma, double half) {
    double h = 0.0;
    const int m = 200000;
    const double lo = mu - 12 * sigma, hi = mu + 12 * sigma, dz = (hi - lo) / m;
    for (int i = 0; i < m; ++i) {
      const double z = lo + (i + 0.5) * dz;
      const double phi = std::exp(-0.5 * std::pow((z - mu) / sigma, 2)) / (sigma * std::sqrt(2 * std::numbers::pi));
      const double th = std::tanh(z);
      h += phi * (-std::log(phi) + std::log(half * (1 - th * th))) * dz;
    }
    return h;
  };
  const double expect = 0.5 * entropy(0.3, 0.5, 0.375) + 0.5 * entropy(-0.4, 0.8, 0.375);
  // Single-sample estimator: standard error about 1/sqrt(n).
  EXPECT_NEAR(res.entropy_c, expect, 4.0 / std::sqrt(n));
  EXPECT_NEAR(res.entropy_d + res.entropy_c, std::log(2.0) + expect, 4.0 / std::sqrt(n));
}

TEST(Targets, UntouchedByGradientSteps) {
  Fixture f;
  std::mt19937_64 rng(17);
  nn::ParamList targets;
  for (int i = 0; i < kCritics; ++i) {
    auto p = f.agent.target(i).parameters();
    targets.insert(targets.end(), p.begin(), p.end());
  }
  const double before = checksum(targets);
  nn::Adam opt(f.agent.policy().parameters());
  opt.zero_grad();
  f.agent.policy_loss(f.batch, f.agent.normal_noise(2, rng), 0.5, true);
  opt.step();
  for (auto* p : targets) EXPECT_EQ(p->grad.cwiseAbs().sum(), 0.0);
  EXPECT_EQ(checksum(targets), before);
  f.agent.critic_targets(f.batch, f.agent.normal_noise(2, rng));
  EXPECT_EQ(checksum(targets), before);
}

TEST(Polyak, UnitAndZeroRate) {
  for (double rho : {1.0, 0.0}) {
    SacConfig cfg = tiny_config();
    cfg.polyak = rho;
    SacAgent a(cfg, kTwo, 2, 0.9);
    std::mt19937_64 rng(18);
    randomize(a.critic(kPower1).parameters(), rng, 1.0);
    const auto tp = a.target(kPower1).parameters();
    const auto op = a.critic(kPower1).parameters();
    std::vector<Mat> before;
    for (auto* p : tp) before.push_back(p->value);
    a.polyak();
    for (std::size_t i = 0; i < tp.size(); ++i) EXPECT_EQ(tp[i]->value, rho == 1.0 ? before[i] : op[i]->value);
  }
}

TEST(Architecture, FullSizeGradients) {
  // Paper-size networks for both machines, checkpointed through one loss.
  struct Case {
    ActionSpace sp;
    std::vector<Eigen::Index> critic_hidden;
  };
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
      if (grad) t.backward(y);
      return y.scalar();
    };
    auto pp = pol.parameters();
    const auto r1 = nn::gradcheck(pol_loss, pp, 100, rng);
    EXPECT_EQ(r1.probes, 100);
    EXPECT_LT(r1.max_rel_error, 1e-5);
    Mat un(B, 1);
    un << 0.3, -0.7;
    auto cri_loss = [&](nn::Tape& t, bool grad) {
      const auto q = cri.values(t, cri.features(t, s), t.constant(un));
      const auto y = nn::sum(nn::square(q));
      if (grad) t.backward(y);
      return y.scalar();
    };
    auto cp = cri.parameters();
    const auto r2 = nn::gradcheck(cri_loss, cp, 100, rng);
    EXPECT_EQ(r2.probes, 100);
    EXPECT_LT(r2.max_rel_error, 1e-5);
  }
}

TEST(Training, BanditConverges) {
  BanditTask task(0.7, 8, 0.9);
  SacConfig cfg = toy_config(21);
  Trainer tr(cfg, task);
  tr.run(20000);
  std::mt19937_64 unused(0);
  const auto a = tr.agent().act(task.history(), false, unused);
  EXPECT_NEAR(a.u, 0.70, 0.05);
}

TEST(Training, AlternationSolved) {
  AlternationTask task(8, 0.9);
  SacConfig cfg = toy_config(22);
  Trainer tr(cfg, task);
  tr.run(15000);
  const auto roll = deterministic_rollout(tr.agent(), task, 64);
  for (const auto& r : roll.rewards) EXPECT_EQ(r.r_power, 1.0);
}

TEST(Training, TargetMagnitudeBound) {
  // Fixed temperatures; the bound uses the measured reward and entropy extremes.
  AlternationTask task(8, 0.9);
  SacConfig cfg = toy_config(23);
  cfg.temperature_lr = 1e-300;
  Trainer tr(cfg, task);
  double max_y = 0.0, max_h = 0.0;
  for (int k = 0; k < 40; ++k) {
    tr.run(100);
    if (tr.updates() == 0) continue;
    max_y = std::max(max_y, tr.last_update().max_abs_target);
    max_h = std::max(max_h, std::abs(tr.last_update().entropy_c));
  }
  const double bound = (1.0 + tr.agent().alpha_d() * std::log(2.0) + tr.agent().alpha_c() * max_h) / (1 - 0.9);
  EXPECT_GT(max_y, 0.0);
  EXPECT_LE(max_y, bound);
}

TEST(Training, ReproducibleAndResumable) {
  auto run = [](std::uint64_t steps, std::ostringstream& log) {
    BanditTask task;
    SacConfig cfg = toy_config(24);
    cfg.log_every = 100;
    Trainer tr(cfg, task);
    tr.set_log(&log);
    tr.run(steps);
    return tr.average_return();
  };
  std::ostringstream a, b;
  EXPECT_EQ(run(2000, a), run(2000, b));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), kTrainLogHeader);

  const auto dir = std::filesystem::temp_directory_path() / "qtm_test_resume";
  std::filesystem::create_directories(dir);
  SacConfig cfg = toy_config(24);
  cfg.log_every = 100;
  std::ostringstream first;
  {
    BanditTask task;
    Trainer tr(cfg, task);
    tr.set_log(&first);
    tr.run(1200);
    tr.save_checkpoint(dir / "ckpt.bin");
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt.bin.json"));
  BanditTask task;
  Trainer tr(cfg, task);
  tr.load_checkpoint(dir / "ckpt.bin");
  tr.set_log(&first);
  tr.run(800);
  EXPECT_EQ(first.str(), a.str());
  std::filesystem::remove_all(dir);
}

TEST(Training, DivergenceAbortsWithCheckpoint) {
  BanditTask task;
  SacConfig cfg = toy_config(25);
  cfg.random_steps = 100;
  cfg.first_update = 100;
  Trainer tr(cfg, task);
  tr.agent().critic(kPower1).head.layers.back().bias.value(0, 0) = std::nan("");
  const auto path = std::filesystem::temp_directory_path() / "qtm_test_diverge.bin";
  tr.set_diagnostic_path(path);
  EXPECT_THROW(tr.run(200), DivergenceError);
  EXPECT_TRUE(std::filesystem::exists(path));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}
