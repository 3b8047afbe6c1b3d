#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtm::sac {

struct ExponentialSchedule {
  double start = 0.0;
  double end = 0.0;
  double decay = 1.0;

  double operator()(double n) const { return end + (start - end) * std::exp(-n / decay); }
};

/// c(n) = end + (start - end) / (1 + exp((n - mean) / decay)); constant when
/// `constant` is set.
struct FermiSchedule {
  double start = 1.0;
  double end = 1.0;
  double mean = 0.0;
  double decay = 1.0;
  bool constant = true;

  double operator()(double n) const {
    if (constant) return end;
    const double x = (n - mean) / decay;
    if (x > 700.0) return end;
    return end + (start - end) / (1.0 + std::exp(x));
  }
};

struct SacConfig {
  // Networks.
  std::vector<Eigen::Index> conv_channels{64, 64, 64, 128, 128, 128, 128};
  std::vector<Eigen::Index> policy_hidden{256};
  std::vector<Eigen::Index> critic_hidden{256, 256};
  double log_sigma_min = -20.0;
  double log_sigma_max = 2.0;

  // Optimization.
  std::size_t batch_size = 512;
  std::size_t buffer_capacity = 280000;
  double lr = 3e-4;
  double polyak = 0.995;
  double temperature_lr = 1e-3;
  double initial_alpha_c = 1.0;
  double initial_alpha_d = 1.0;

  // Loop.
  std::uint64_t total_steps = 500000;
  std::uint64_t random_steps = 5000;
  std::uint64_t first_update = 1000;
  std::uint64_t n_updates = 50;
  std::uint64_t log_every = 1000;
  std::uint64_t checkpoint_every = 0;  // 0 disables periodic checkpoints

  // Schedules.
  ExponentialSchedule entropy_c{0.0, -3.5, 440000.0};
  ExponentialSchedule entropy_d{0.0, 0.0, 1.0};
  FermiSchedule weight{1.0, 1.0, 0.0, 1.0, true};

  std::uint64_t seed = 0;

  void validate() const {
    if (conv_channels.empty()) throw std::invalid_argument("sac: conv_channels must be nonempty");
    for (auto c : conv_channels)
      if (c <= 0) throw std::invalid_argument("sac: channel counts must be positive");
    for (auto c : policy_hidden)
      if (c <= 0) throw std::invalid_argument("sac: hidden sizes must be positive");
    for (auto c : critic_hidden)
      if (c <= 0) throw std::invalid_argument("sac: hidden sizes must be positive");
    if (!(log_sigma_min < log_sigma_max)) throw std::invalid_argument("sac: log_sigma range empty");
    if (batch_size == 0) throw std::invalid_argument("sac: batch_size must be positive");
    if (buffer_capacity < batch_size) throw std::invalid_argument("sac: buffer smaller than a batch");
    if (!(lr > 0) || !(temperature_lr > 0)) throw std::invalid_argument("sac: learning rates must be positive");
    if (!(polyak >= 0.0 && polyak <= 1.0)) throw std::invalid_argument("sac: polyak must lie in [0, 1]");
    if (!(initial_alpha_c > 0) || !(initial_alpha_d > 0))
      throw std::invalid_argument("sac: initial temperatures must be positive");
    if (n_updates == 0) throw std::invalid_argument("sac: n_updates must be positive");
    if (!(entropy_c.decay > 0) || !(entropy_d.decay > 0) || (!weight.constant && !(weight.decay > 0)))
      throw std::invalid_argument("sac: schedule decays must be positive");
  }
};

/// Agent settings for the qubit refrigerator at trade-off weight c, with c
/// annealed from 1.
inline SacConfig qubit_sac_preset(double c) {
  SacConfig s;
  s.critic_hidden = {256, 256};
  s.buffer_capacity = 280000;
  s.entropy_c = {0.0, -3.5, 440000.0};
  s.weight = {1.0, c, 170000.0, 20000.0, false};
  return s;
}

/// Agent settings for the oscillator engine; c is held fixed.
inline SacConfig oscillator_sac_preset(double c) {
  SacConfig s;
  s.critic_hidden = {256, 128};
  s.buffer_capacity = 160000;
  s.entropy_c = {-0.72, -3.5, 144000.0};
  s.entropy_d = {std::log(3.0), 0.01, 144000.0};
  s.weight = {c, c, 0.0, 1.0, true};
  return s;
}

}  // namespace qtm::sac
