#pragma once

#include "qtm/nn/adam.hpp"
#include "qtm/nn/checkpoint.hpp"
#include "qtm/nn/distributions.hpp"
#include "qtm/sac/config.hpp"
#include "qtm/sac/networks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace qtm::sac {

/// Critic slots: a twin pair per objective. The second objective learns the
/// negated entropy-production reward so that both critics carry the entropy
/// bonus with the same sign and c*Q_power + (1-c)*Q_negsigma is the soft value
/// of the combined reward c*r_P - (1-c)*r_Sigma.
enum CriticSlot : int { kPower1 = 0, kPower2 = 1, kNegSigma1 = 2, kNegSigma2 = 3 };
inline constexpr int kCritics = 4;

struct PolicyDistribution {
  Eigen::VectorXd probs;      // pi_D(d|s)
  Eigen::VectorXd mu;         // per discrete action
  Eigen::VectorXd log_sigma;  // clamped
};

struct CriticTargets {
  Mat power;      // B x 1
  Mat neg_sigma;  // B x 1
};

struct PolicyLossResult {
  double loss = 0.0;
  double entropy_d = 0.0;  // batch mean of H_D(s)
  double entropy_c = 0.0;  // batch mean of the single-sample H_C(s)
  double min_prob_sum_error = 0.0;
};

struct UpdateStats {
  std::array<double, kCritics> critic_loss{};
  double policy_loss = 0.0;
  double entropy_d = 0.0;
  double entropy_c = 0.0;
  double alpha_d = 0.0;
  double alpha_c = 0.0;
  double max_abs_target = 0.0;
};

class SacAgent {
 public:
  SacAgent(const SacConfig& cfg, ActionSpace space, std::size_t history_length, double gamma)
      : cfg_(cfg), space_(std::move(space)), n_(history_length), gamma_(gamma) {
    cfg_.validate();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("sac: need 0 <= gamma < 1");
    std::mt19937_64 init(cfg_.seed ^ 0x5851f42d4c957f2dULL);
    policy_ = PolicyNet("policy", space_, n_, cfg_.conv_channels, cfg_.policy_hidden, init);
    static const char* names[kCritics] = {"q_power_1", "q_power_2", "q_negsigma_1", "q_negsigma_2"};
    for (int i = 0; i < kCritics; ++i) {
      critics_[i] = CriticNet(names[i], space_, n_, cfg_.conv_channels, cfg_.critic_hidden, init);
      targets_[i] = CriticNet(std::string("target_") + names[i], space_, n_, cfg_.conv_channels, cfg_.critic_hidden,
                              init);
      nn::copy_values(targets_[i].parameters(), critics_[i].parameters());
    }
    const nn::AdamConfig adam{cfg_.lr, 0.9, 0.999, 1e-8};
    policy_opt_ = nn::Adam(policy_.parameters(), adam);
    for (int i = 0; i < kCritics; ++i) critic_opt_[i] = nn::Adam(critics_[i].parameters(), adam);
    log_alpha_c_ = std::log(cfg_.initial_alpha_c);
    log_alpha_d_ = degenerate() ? -std::numeric_limits<double>::infinity() : std::log(cfg_.initial_alpha_d);
  }

  // Optimizers hold pointers into the networks.
  SacAgent(const SacAgent&) = delete;
  SacAgent& operator=(const SacAgent&) = delete;

  const SacConfig& config() const { return cfg_; }
  const ActionSpace& actions() const { return space_; }
  std::size_t history_length() const { return n_; }
  double gamma() const { return gamma_; }
  bool degenerate() const { return space_.n_discrete() == 1; }
  Eigen::Index n_discrete() const { return static_cast<Eigen::Index>(space_.n_discrete()); }

  double alpha_c() const { return std::exp(log_alpha_c_); }
  /// Zero and frozen when there is a single discrete action.
  double alpha_d() const { return degenerate() ? 0.0 : std::exp(log_alpha_d_); }
  void set_alphas(double alpha_c, double alpha_d) {
    log_alpha_c_ = std::log(alpha_c);
    if (!degenerate()) log_alpha_d_ = std::log(alpha_d);
  }

  PolicyNet& policy() { return policy_; }
  CriticNet& critic(int i) { return critics_[i]; }
  CriticNet& target(int i) { return targets_[i]; }

  PolicyDistribution distribution(const HistoryState& h) {
    std::vector<double> u;
    std::vector<std::uint8_t> d;
    flatten_history(h, space_, u, d);
    Tape t;
    const auto heads = policy_(t, encode_states(u, d, 1, n_, space_), encode_last(u, d, 1, n_, space_), false);
    const Var logp = nn::log_softmax_rows(heads.logits);
    PolicyDistribution out;
    out.probs = logp.value().row(0).array().exp().transpose();
    out.mu = heads.mu.value().row(0).transpose();
    out.log_sigma = heads.log_sigma.value().row(0).transpose().cwiseMax(cfg_.log_sigma_min).cwiseMin(cfg_.log_sigma_max);
    return out;
  }

  /// Stochastic: d ~ pi_D, u from the squashed Gaussian. Deterministic:
  /// d = argmax pi_D (lowest index on ties) and the squashed mean.
  ControlAction act(const HistoryState& h, bool stochastic, std::mt19937_64& rng) {
    const PolicyDistribution p = distribution(h);
    Eigen::Index k = 0;
    if (stochastic) {
      const double x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      double acc = 0.0;
      k = p.probs.size() - 1;
      for (Eigen::Index i = 0; i < p.probs.size(); ++i) {
        acc += p.probs(i);
        if (x < acc) {
          k = i;
          break;
        }
      }
      const double xi = std::normal_distribution<double>(0.0, 1.0)(rng);
      const double z = p.mu(k) + std::exp(p.log_sigma(k)) * xi;
      return {squash(std::tanh(z)), space_.discrete[static_cast<std::size_t>(k)]};
    }
    p.probs.maxCoeff(&k);
    return {squash(std::tanh(p.mu(k))), space_.discrete[static_cast<std::size_t>(k)]};
  }

  /// Soft Bellman targets with one continuous sample per discrete action;
  /// xi is B x D standard-normal noise.
  CriticTargets critic_targets(const Batch& b, const Mat& xi) {
    check_batch(b);
    Tape t;
    const Mat s1 = encode_states(b.next_u, b.next_d, b.size, n_, space_);
    const Mat l1 = encode_last(b.next_u, b.next_d, b.size, n_, space_);
    const PolicySample ps = sample_policy(t, s1, l1, xi, false);
    std::array<Var, kCritics> q;
    for (int i = 0; i < kCritics; ++i) q[i] = evaluate_critic(t, targets_[i], s1, ps.u_flat, false);
    const double ac = alpha_c(), ad = alpha_d();
    auto soft_value = [&](const Var& q1, const Var& q2) {
      Var inner = sub(nn::minimum(q1, q2), scale(ps.log_pc, ac));
      if (ad != 0.0) inner = sub(inner, scale(ps.log_pd, ad));
      return nn::row_sum(mul(ps.pd, inner)).value();
    };
    const Mat vp = soft_value(q[kPower1], q[kPower2]);
    const Mat vn = soft_value(q[kNegSigma1], q[kNegSigma2]);
    CriticTargets y{Mat(b.size, 1), Mat(b.size, 1)};
    for (std::size_t r = 0; r < b.size; ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      y.power(i, 0) = b.r_power[r] + gamma_ * vp(i, 0);
      y.neg_sigma(i, 0) = -b.r_sigma[r] + gamma_ * vn(i, 0);
    }
    return y;
  }

  /// Mean squared Bellman error of online critic i; accumulates gradients
  /// into its parameters when `backward` is set.
  double critic_loss(int i, const Batch& b, const Mat& y, bool backward) {
    check_batch(b);
    Tape t;
    const Mat s = encode_states(b.state_u, b.state_d, b.size, n_, space_);
    Mat u(b.size, 1);
    for (std::size_t r = 0; r < b.size; ++r) u(static_cast<Eigen::Index>(r), 0) = normalize_u(b.action_u[r], space_);
    const Var f = critics_[i].features(t, s, true);
    const Var all = critics_[i].values(t, f, t.constant(u), true);
    std::vector<int> idx(b.action_d.begin(), b.action_d.end());
    const Var loss = nn::mean(nn::square(sub(nn::gather_cols(all, idx), t.constant(y))));
    if (backward) t.backward(loss);
    return loss.scalar();
  }

  /// Policy loss at trade-off weight c with the critics frozen; xi is B x D.
  PolicyLossResult policy_loss(const Batch& b, const Mat& xi, double c, bool backward) {
    check_batch(b);
    Tape t;
    const Mat s = encode_states(b.state_u, b.state_d, b.size, n_, space_);
    const Mat l = encode_last(b.state_u, b.state_d, b.size, n_, space_);
    const PolicySample ps = sample_policy(t, s, l, xi, true);
    auto combined = [&](int power, int neg) {
      if (c == 1.0) return evaluate_critic(t, critics_[power], s, ps.u_flat, false);
      if (c == 0.0) return evaluate_critic(t, critics_[neg], s, ps.u_flat, false);
      return add(scale(evaluate_critic(t, critics_[power], s, ps.u_flat, false), c),
                 scale(evaluate_critic(t, critics_[neg], s, ps.u_flat, false), 1.0 - c));
    };
    const Var qmin = nn::minimum(combined(kPower1, kNegSigma1), combined(kPower2, kNegSigma2));
    const double ac = alpha_c(), ad = alpha_d();
    Var inner = sub(scale(ps.log_pc, ac), qmin);
    if (ad != 0.0) inner = add(inner, scale(ps.log_pd, ad));
    const Var loss = scale(nn::sum(mul(ps.pd, inner)), 1.0 / static_cast<double>(b.size));
    if (backward) t.backward(loss);

    PolicyLossResult out;
    out.loss = loss.scalar();
    const Mat& pd = ps.pd.value();
    const double inv_b = 1.0 / static_cast<double>(b.size);
    out.entropy_d = -(pd.cwiseProduct(ps.log_pd.value())).sum() * inv_b;
    out.entropy_c = -(pd.cwiseProduct(ps.log_pc.value())).sum() * inv_b;
    out.min_prob_sum_error = (pd.rowwise().sum().array() - 1.0).abs().maxCoeff();
    return out;
  }

  /// One descent step for L = alpha (H - target) taken in log(alpha), with
  /// step lr * (H - target): alpha falls while the entropy exceeds its target.
  void temperature_step(double entropy_d, double entropy_c, double target_d, double target_c) {
    log_alpha_c_ -= cfg_.temperature_lr * (entropy_c - target_c);
    if (!degenerate()) log_alpha_d_ -= cfg_.temperature_lr * (entropy_d - target_d);
  }

  void polyak() {
    for (int i = 0; i < kCritics; ++i) nn::polyak_update(targets_[i].parameters(), critics_[i].parameters(), cfg_.polyak);
  }

  /// A full update round: critic steps, policy step, temperature step, then
  /// Polyak averaging of the targets.
  UpdateStats update(const Batch& b, double c, double target_d, double target_c, std::mt19937_64& rng) {
    UpdateStats st;
    const CriticTargets y = critic_targets(b, normal_noise(b.size, rng));
    st.max_abs_target = std::max(y.power.cwiseAbs().maxCoeff(), y.neg_sigma.cwiseAbs().maxCoeff());
    for (int i = 0; i < kCritics; ++i) {
      critic_opt_[i].zero_grad();
      st.critic_loss[i] = critic_loss(i, b, i < kNegSigma1 ? y.power : y.neg_sigma, true);
      critic_opt_[i].step();
    }
    policy_opt_.zero_grad();
    const PolicyLossResult pl = policy_loss(b, normal_noise(b.size, rng), c, true);
    policy_opt_.step();
    st.policy_loss = pl.loss;
    st.entropy_d = pl.entropy_d;
    st.entropy_c = pl.entropy_c;
    temperature_step(pl.entropy_d, pl.entropy_c, target_d, target_c);
    polyak();
    st.alpha_c = alpha_c();
    st.alpha_d = alpha_d();
    return st;
  }

  Mat normal_noise(std::size_t rows, std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat xi(static_cast<Eigen::Index>(rows), n_discrete());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi.data()[i] = nd(rng);
    return xi;
  }

  nn::ParamList all_parameters() {
    nn::ParamList ps = policy_.parameters();
    for (auto& c : critics_) {
      auto q = c.parameters();
      ps.insert(ps.end(), q.begin(), q.end());
    }
    for (auto& c : targets_) {
      auto q = c.parameters();
      ps.insert(ps.end(), q.begin(), q.end());
    }
    return ps;
  }

  void save(std::ostream& os) {
    nn::save_parameters(os, all_parameters());
    save_adam(os, policy_opt_);
    for (auto& o : critic_opt_) save_adam(os, o);
    io::write_pod(os, log_alpha_c_);
    io::write_pod(os, log_alpha_d_);
  }

  void load(std::istream& is) {
    nn::load_parameters(is, all_parameters());
    load_adam(is, policy_opt_);
    for (auto& o : critic_opt_) load_adam(is, o);
    log_alpha_c_ = io::read_pod<double>(is);
    log_alpha_d_ = io::read_pod<double>(is);
  }

 private:
  struct PolicySample {
    Var log_pd;  // B x D
    Var pd;      // B x D
    Var log_pc;  // B x D
    Var u_flat;  // (B*D) x 1, rescaled to [-1, 1]
  };

  double squash(double tanh_z) const {
    return std::clamp(space_.u_min + 0.5 * (space_.u_max - space_.u_min) * (1.0 + tanh_z), space_.u_min,
                      space_.u_max);
  }

  void check_batch(const Batch& b) const {
    if (b.length != n_) throw std::invalid_argument("sac: batch history length mismatch");
    if (b.size == 0) throw std::invalid_argument("sac: empty batch");
  }

  PolicySample sample_policy(Tape& t, const Mat& states, const Mat& last, const Mat& xi, bool trainable) {
    if (xi.rows() != static_cast<Eigen::Index>(last.rows()) || xi.cols() != n_discrete())
      throw nn::ShapeError("sac: noise must be B x |D|");
    const PolicyHeads h = policy_(t, states, last, trainable);
    PolicySample out;
    out.log_pd = nn::log_softmax_rows(h.logits);
    out.pd = nn::exp(out.log_pd);
    const auto sq = nn::squashed_gaussian(h.mu, h.log_sigma, xi, space_.u_min, space_.u_max,
                                          {cfg_.log_sigma_min, cfg_.log_sigma_max});
    out.log_pc = sq.log_prob;
    const double k = 2.0 / (space_.u_max - space_.u_min);
    const Var un = nn::add_scalar(scale(sq.u, k), -1.0 - k * space_.u_min);
    out.u_flat = nn::reshape(un, un.rows() * un.cols(), 1);
    return out;
  }

  /// Q(s, u_d, d) for every discrete action d: B x D.
  Var evaluate_critic(Tape& t, CriticNet& net, const Mat& states, const Var& u_flat, bool trainable) {
    const Eigen::Index d = n_discrete();
    const Var f = net.features(t, states, trainable);
    const Var q = net.values(t, nn::repeat_rows(f, d), u_flat, trainable);
    std::vector<int> idx(static_cast<std::size_t>(q.rows()));
    for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = static_cast<int>(r % static_cast<std::size_t>(d));
    return nn::reshape(nn::gather_cols(q, idx), f.rows(), d);
  }

  static void save_adam(std::ostream& os, const nn::Adam& a) {
    io::write_pod<std::int64_t>(os, a.steps());
    for (const auto& m : a.first_moments()) io::write_doubles(os, m.data(), static_cast<std::size_t>(m.size()));
    for (const auto& v : a.second_moments()) io::write_doubles(os, v.data(), static_cast<std::size_t>(v.size()));
  }

  static void load_adam(std::istream& is, nn::Adam& a) {
    const auto t = io::read_pod<std::int64_t>(is);
    std::vector<Mat> m = a.first_moments(), v = a.second_moments();
    for (auto& x : m) io::read_doubles(is, x.data(), static_cast<std::size_t>(x.size()));
    for (auto& x : v) io::read_doubles(is, x.data(), static_cast<std::size_t>(x.size()));
    a.set_state(t, std::move(m), std::move(v));
  }

  SacConfig cfg_;
  ActionSpace space_;
  std::size_t n_;
  double gamma_;
  PolicyNet policy_;
  std::array<CriticNet, kCritics> critics_;
  std::array<CriticNet, kCritics> targets_;
  nn::Adam policy_opt_;
  std::array<nn::Adam, kCritics> critic_opt_;
  double log_alpha_c_ = 0.0;
  double log_alpha_d_ = 0.0;
};

}  // namespace qtm::sac
