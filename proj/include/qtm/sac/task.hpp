#pragma once

#include "qtm/common/binary_io.hpp"
#include "qtm/env/environment.hpp"

#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace qtm::sac {

using env::ControlAction;
using env::Coupling;
using env::HistoryState;

struct ActionSpace {
  double u_min = 0.0;
  double u_max = 1.0;
  std::vector<Coupling> discrete{Coupling::Both};

  std::size_t n_discrete() const { return discrete.size(); }

  int index_of(Coupling d) const {
    for (std::size_t i = 0; i < discrete.size(); ++i)
      if (discrete[i] == d) return static_cast<int>(i);
    return -1;
  }
};

struct TaskReward {
  double r_power = 0.0;
  double r_sigma = 0.0;
};

/// A continuing control task whose observation is the action history.
class Task {
 public:
  virtual ~Task() = default;
  virtual const ActionSpace& actions() const = 0;
  virtual std::size_t history_length() const = 0;
  virtual double gamma() const = 0;
  virtual const HistoryState& history() const = 0;
  virtual TaskReward step(const ControlAction& a) = 0;
  virtual void reset() = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
};

/// Adapter over the thermal-machine environment.
class MachineTask : public Task {
 public:
  explicit MachineTask(env::EnvConfig cfg) : env_(std::move(cfg)) {
    space_.u_min = env_.config().u_min;
    space_.u_max = env_.config().u_max;
    space_.discrete = env_.config().discrete;
  }

  const ActionSpace& actions() const override { return space_; }
  std::size_t history_length() const override { return env_.config().history_length; }
  double gamma() const override { return env_.config().gamma; }
  const HistoryState& history() const override { return env_.history(); }

  TaskReward step(const ControlAction& a) override {
    last_ = env_.step(a);
    return {last_.r_power, last_.r_sigma};
  }

  void reset() override { env_.reset(); }
  void save(std::ostream& os) const override { env::write_snapshot(os, env_.snapshot()); }
  void load(std::istream& is) override { env_.restore(env::read_snapshot(is)); }

  env::Environment& environment() { return env_; }
  const env::StepOutcome& last_outcome() const { return last_; }

 private:
  env::Environment env_;
  ActionSpace space_;
  env::StepOutcome last_;
};

namespace detail {
inline void save_history(std::ostream& os, const HistoryState& h) {
  io::write_pod<std::uint64_t>(os, h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    io::write_pod(os, h[i].u);
    io::write_pod(os, static_cast<std::int32_t>(h[i].d));
  }
}

inline HistoryState load_history(std::istream& is, std::size_t expect) {
  const auto n = io::read_pod<std::uint64_t>(is);
  if (n != expect) throw std::runtime_error("task: history length mismatch");
  std::vector<ControlAction> acts(n);
  for (auto& a : acts) {
    a.u = io::read_pod<double>(is);
    a.d = static_cast<Coupling>(io::read_pod<std::int32_t>(is));
  }
  HistoryState h(n, acts.front());
  for (const auto& a : acts) h.push(a);
  return h;
}
}  // namespace detail

/// Stateless bandit: r = -(u - target)^2, one discrete action.
class BanditTask : public Task {
 public:
  explicit BanditTask(double target = 0.7, std::size_t n = 8, double gamma = 0.9)
      : target_(target), n_(n), gamma_(gamma) {
    space_ = {0.0, 1.0, {Coupling::Both}};
    reset();
  }

  const ActionSpace& actions() const override { return space_; }
  std::size_t history_length() const override { return n_; }
  double gamma() const override { return gamma_; }
  const HistoryState& history() const override { return h_; }

  TaskReward step(const ControlAction& a) override {
    h_.push(a);
    return {-(a.u - target_) * (a.u - target_), 0.0};
  }

  void reset() override { h_ = HistoryState(n_, {0.5, Coupling::Both}); }
  void save(std::ostream& os) const override { detail::save_history(os, h_); }
  void load(std::istream& is) override { h_ = detail::load_history(is, n_); }

 private:
  double target_;
  std::size_t n_;
  double gamma_;
  ActionSpace space_;
  HistoryState h_;
};

/// Two discrete actions; reward +1 iff the discrete action differs from the
/// previous one. The continuous control is ignored.
class AlternationTask : public Task {
 public:
  explicit AlternationTask(std::size_t n = 8, double gamma = 0.9) : n_(n), gamma_(gamma) {
    space_ = {0.0, 1.0, {Coupling::Hot, Coupling::Cold}};
    reset();
  }

  const ActionSpace& actions() const override { return space_; }
  std::size_t history_length() const override { return n_; }
  double gamma() const override { return gamma_; }
  const HistoryState& history() const override { return h_; }

  TaskReward step(const ControlAction& a) override {
    const bool alternates = a.d != h_.newest().d;
    h_.push(a);
    return {alternates ? 1.0 : 0.0, 0.0};
  }

  void reset() override { h_ = HistoryState(n_, {0.5, Coupling::Hot}); }
  void save(std::ostream& os) const override { detail::save_history(os, h_); }
  void load(std::istream& is) override { h_ = detail::load_history(is, n_); }

 private:
  std::size_t n_;
  double gamma_;
  ActionSpace space_;
  HistoryState h_;
};

}  // namespace qtm::sac
