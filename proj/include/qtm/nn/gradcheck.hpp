#pragma once

#include "qtm/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace qtm::nn {

struct GradcheckResult {
  double max_rel_error = 0.0;
  int probes = 0;
  int skipped_kinks = 0;
};

/// Compares backprop gradients of a scalar loss with central differences at
/// randomly chosen parameter entries. Probes whose one-sided differences
/// disagree (a rectifier kink inside [x-h, x+h]) are redrawn.
inline GradcheckResult gradcheck(const std::function<double(Tape&, bool)>& loss, const ParamList& params,
                                 int n_probes, std::mt19937_64& rng, double h = 1e-5, double floor = 1e-4) {
  zero_grads(params);
  {
    Tape t;
    loss(t, true);
  }
  auto eval = [&] {
    Tape t;
    return loss(t, false);
  };
  std::size_t total = 0;
  for (const Parameter* p : params) total += static_cast<std::size_t>(p->value.size());
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);

  GradcheckResult res;
  int attempts = 0;
  while (res.probes < n_probes && attempts < 20 * n_probes) {
    ++attempts;
    std::size_t k = pick(rng);
    Parameter* p = nullptr;
    for (Parameter* q : params) {
      const auto s = static_cast<std::size_t>(q->value.size());
      if (k < s) {
        p = q;
        break;
      }
      k -= s;
    }
    double& x = p->value.data()[k];
    const double x0 = x;
    const double f0 = eval();
    x = x0 + h;
    const double fp = eval();
    x = x0 - h;
    const double fm = eval();
    x = x0;
    const double dp = (fp - f0) / h, dm = (f0 - fm) / h;
    if (std::abs(dp - dm) > 1e-3 * std::max({std::abs(dp), std::abs(dm), floor})) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = p->grad.data()[k];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.probes;
  }
  return res;
}

}  // namespace qtm::nn
