#pragma once

#include "qtm/sac/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace qtm::sac {

/// Scalar loop re-evaluation of the policy and critic networks, independent
/// of the tape. Used as an oracle for the batched implementation.
struct ReferenceNetworks {
  const ActionSpace& sp;

  std::vector<double> enc(double u, Coupling d) const {
    std::vector<double> v{2.0 * (u - sp.u_min) / (sp.u_max - sp.u_min) - 1.0};
    if (sp.n_discrete() > 1)
      for (std::size_t k = 0; k < sp.n_discrete(); ++k) v.push_back(sp.discrete[k] == d ? 1.0 : 0.0);
    return v;
  }

  static std::vector<double> affine(const std::vector<double>& x, const Mat& w, const Mat* b) {
    std::vector<double> y(static_cast<std::size_t>(w.cols()), 0.0);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = b ? (*b)(0, j) : 0.0;
      for (Eigen::Index i = 0; i < w.rows(); ++i) s += x[static_cast<std::size_t>(i)] * w(i, j);
      y[static_cast<std::size_t>(j)] = s;
    }
    return y;
  }

  std::vector<double> conv(nn::ConvStack& cs, const HistoryState& h) const {
    std::vector<std::vector<double>> x;
    for (std::size_t i = 0; i < h.size(); ++i) x.push_back(enc(h[i].u, h[i].d));
    for (auto& blk : cs.blocks) {
      std::vector<std::vector<double>> y;
      for (std::size_t i = 0; i + 1 < x.size() + 1; i += 2) {
        std::vector<double> patch = x[i];
        patch.insert(patch.end(), x[i + 1].begin(), x[i + 1].end());
        auto pre = affine(patch, blk.kernel.value, &blk.bias.value);
        const auto skip = affine(x[i], blk.residual.value, nullptr);
        for (std::size_t k = 0; k < pre.size(); ++k) pre[k] = std::max(pre[k], 0.0) + skip[k];
        y.push_back(pre);
      }
      x = y;
    }
    return x.front();
  }

  static std::vector<double> mlp(nn::MLP& m, std::vector<double> x) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      x = affine(x, m.layers[l].weight.value, &m.layers[l].bias.value);
      if (l + 1 < m.layers.size())
        for (double& v : x) v = std::max(v, 0.0);
    }
    return x;
  }

  struct Pol {
    std::vector<double> logp, mu, ls;
  };

  Pol policy(PolicyNet& p, const HistoryState& h) const {
    auto f = conv(p.conv, h);
    const auto last = enc(h.newest().u, h.newest().d);
    f.insert(f.end(), last.begin(), last.end());
    const auto out = mlp(p.head, f);
    const std::size_t d = sp.n_discrete();
    Pol r;
    double mx = -1e300;
    for (std::size_t k = 0; k < d; ++k) mx = std::max(mx, out[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < d; ++k) z += std::exp(out[k] - mx);
    for (std::size_t k = 0; k < d; ++k) {
      r.logp.push_back(out[k] - mx - std::log(z));
      r.mu.push_back(out[d + k]);
      r.ls.push_back(std::clamp(out[2 * d + k], -20.0, 2.0));
    }
    return r;
  }

  double q(CriticNet& c, const HistoryState& h, double u, std::size_t d) const {
    auto f = conv(c.conv, h);
    f.push_back(2.0 * (u - sp.u_min) / (sp.u_max - sp.u_min) - 1.0);
    return mlp(c.head, f)[d];
  }

  // Squashed sample and its log-density.
  std::pair<double, double> sample(double mu, double ls, double xi) const {
    const double zeta = mu + std::exp(ls) * xi;
    const double th = std::tanh(zeta);
    const double half = 0.5 * (sp.u_max - sp.u_min);
    const double u = sp.u_min + half * (1.0 + th);
    const double az = std::abs(zeta);
    const double log_sech2 = 2.0 * (std::log(2.0) - az - std::log1p(std::exp(-2.0 * az)));
    const double lp = -0.5 * xi * xi - ls - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(half) - log_sech2;
    return {u, lp};
  }
};

}  // namespace qtm::sac
