#pragma once

#include "qtm/common/atomic_file.hpp"
#include "qtm/sac/agent.hpp"
#include "qtm/sac/replay.hpp"
#include "qtm/sac/task.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>

namespace qtm::sac {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Schedules {
  ExponentialSchedule entropy_c;
  ExponentialSchedule entropy_d;
  FermiSchedule weight;

  explicit Schedules(const SacConfig& c) : entropy_c(c.entropy_c), entropy_d(c.entropy_d), weight(c.weight) {}

  double target_c(std::uint64_t n) const { return entropy_c(static_cast<double>(n)); }
  double target_d(std::uint64_t n) const { return entropy_d(static_cast<double>(n)); }
  double c(std::uint64_t n) const { return weight(static_cast<double>(n)); }
};

struct TrainLogRow {
  std::uint64_t step = 0;
  double ret = 0.0;
  double r_power = 0.0;
  double r_sigma = 0.0;
  double alpha_c = 0.0;
  double alpha_d = 0.0;
  double c = 0.0;
  double loss_q = 0.0;
  double loss_pi = 0.0;
  double entropy_c = 0.0;
  double entropy_d = 0.0;
};

inline const char* kTrainLogHeader = "step,return,r_power,r_sigma,alpha_c,alpha_d,c,loss_q,loss_pi,entropy_c,entropy_d";

inline void write_log_row(std::ostream& os, const TrainLogRow& r) {
  os << r.step << ',' << r.ret << ',' << r.r_power << ',' << r.r_sigma << ',' << r.alpha_c << ',' << r.alpha_d << ','
     << r.c << ',' << r.loss_q << ',' << r.loss_pi << ',' << r.entropy_c << ',' << r.entropy_d << '\n';
}

/// Continuing-task training loop: uniform random warm-up actions, then
/// policy actions; after `first_update` steps, `n_updates` update rounds every
/// `n_updates` steps.
class Trainer {
 public:
  Trainer(const SacConfig& cfg, Task& task)
      : cfg_(cfg), task_(task), sched_(cfg),
        agent_(cfg, task.actions(), task.history_length(), task.gamma()),
        buffer_(cfg.buffer_capacity, task.history_length(), task.actions().discrete) {
    std::seed_seq seq{cfg.seed, std::uint64_t{0x71}, std::uint64_t{0x9e3779b97f4a7c15ULL}};
    std::array<std::uint32_t, 6> s{};
    seq.generate(s.begin(), s.end());
    act_rng_.seed((std::uint64_t{s[0]} << 32) | s[1]);
    sample_rng_.seed((std::uint64_t{s[2]} << 32) | s[3]);
    noise_rng_.seed((std::uint64_t{s[4]} << 32) | s[5]);
  }

  SacAgent& agent() { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  Task& task() { return task_; }
  std::uint64_t step() const { return step_; }
  const Schedules& schedules() const { return sched_; }
  const TrainLogRow& last_row() const { return row_; }
  const UpdateStats& last_update() const { return last_; }
  std::uint64_t updates() const { return updates_; }

  /// Sets a file that receives the full training state if training diverges.
  void set_diagnostic_path(std::filesystem::path p) { diagnostic_path_ = std::move(p); }
  void set_log(std::ostream* os) {
    log_ = os;
    if (log_ && step_ == 0) *log_ << kTrainLogHeader << '\n';
    if (log_) log_->precision(17);
  }
  /// Called after every environment step with the action and reward.
  void set_observer(std::function<void(std::uint64_t, const ControlAction&, const TaskReward&)> f) {
    observer_ = std::move(f);
  }

  ControlAction choose_action() {
    if (step_ < cfg_.random_steps) {
      const auto& sp = task_.actions();
      const double u = std::uniform_real_distribution<double>(sp.u_min, sp.u_max)(act_rng_);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, sp.n_discrete() - 1)(act_rng_);
      return {u, sp.discrete[k]};
    }
    return agent_.act(task_.history(), true, act_rng_);
  }

  /// Advances training by `n` environment steps.
  void run(std::uint64_t n) {
    const double g = task_.gamma();
    for (std::uint64_t k = 0; k < n; ++k) {
      const HistoryState s = task_.history();
      const ControlAction a = choose_action();
      const TaskReward r = task_.step(a);
      buffer_.push({s, a, r.r_power, r.r_sigma});
      const double c = sched_.c(step_);
      avg_return_ = g * avg_return_ + (1.0 - g) * (c * r.r_power - (1.0 - c) * r.r_sigma);
      avg_power_ = g * avg_power_ + (1.0 - g) * r.r_power;
      avg_sigma_ = g * avg_sigma_ + (1.0 - g) * r.r_sigma;
      if (observer_) observer_(step_, a, r);
      ++step_;

      if (step_ >= cfg_.first_update && step_ % cfg_.n_updates == 0 && buffer_.size() >= cfg_.batch_size) {
        for (std::uint64_t u = 0; u < cfg_.n_updates; ++u) {
          const Batch b = buffer_.sample(cfg_.batch_size, sample_rng_);
          last_ = agent_.update(b, c, sched_.target_d(step_), sched_.target_c(step_), noise_rng_);
          ++updates_;
          check_finite();
        }
      }
      if (cfg_.log_every > 0 && step_ % cfg_.log_every == 0) {
        fill_row(c);
        if (log_) write_log_row(*log_, row_);
      }
    }
  }

  /// Full state: agent, optimizer moments, replay contents, task state, RNGs
  /// and running averages. Reloading continues bit-identically.
  void save(std::ostream& os) {
    os.write(kMagic, 8);
    io::write_pod(os, kVersion);
    io::write_pod(os, step_);
    io::write_pod(os, updates_);
    io::write_pod(os, avg_return_);
    io::write_pod(os, avg_power_);
    io::write_pod(os, avg_sigma_);
    for (auto* r : {&act_rng_, &sample_rng_, &noise_rng_}) {
      std::ostringstream ss;
      ss << *r;
      io::write_string(os, ss.str());
    }
    agent_.save(os);
    buffer_.save(os);
    task_.save(os);
  }

  void load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8)) throw std::runtime_error("trainer: not a checkpoint");
    if (io::read_pod<std::uint32_t>(is) != kVersion) throw std::runtime_error("trainer: unsupported checkpoint version");
    step_ = io::read_pod<std::uint64_t>(is);
    updates_ = io::read_pod<std::uint64_t>(is);
    avg_return_ = io::read_pod<double>(is);
    avg_power_ = io::read_pod<double>(is);
    avg_sigma_ = io::read_pod<double>(is);
    for (auto* r : {&act_rng_, &sample_rng_, &noise_rng_}) {
      std::istringstream ss(io::read_string(is));
      ss >> *r;
    }
    agent_.load(is);
    buffer_.load(is);
    task_.load(is);
  }

  nlohmann::json metadata() const {
    nlohmann::json j;
    j["format"] = "qtm-train-checkpoint";
    j["version"] = kVersion;
    j["step"] = step_;
    j["updates"] = updates_;
    j["seed"] = cfg_.seed;
    j["alpha_c"] = agent_.alpha_c();
    j["alpha_d"] = agent_.alpha_d();
    j["c"] = sched_.c(step_);
    j["return"] = avg_return_;
    j["history_length"] = task_.history_length();
    j["batch_size"] = cfg_.batch_size;
    j["buffer_capacity"] = cfg_.buffer_capacity;
    return j;
  }

  /// Binary checkpoint plus a JSON sidecar at path + ".json".
  void save_checkpoint(const std::filesystem::path& path) {
    io::write_file_atomic(path, [&](std::ostream& os) { save(os); }, true);
    std::filesystem::path side = path;
    side += ".json";
    io::write_text_atomic(side, metadata().dump(2) + "\n");
  }

  void load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    load(is);
  }

  double average_return() const { return avg_return_; }
  double average_power() const { return avg_power_; }
  double average_sigma() const { return avg_sigma_; }

 private:
  static constexpr char kMagic[9] = "QTMTRAIN";
  static constexpr std::uint32_t kVersion = 1;

  void fill_row(double c) {
    row_.step = step_;
    row_.ret = avg_return_;
    row_.r_power = avg_power_;
    row_.r_sigma = avg_sigma_;
    row_.alpha_c = agent_.alpha_c();
    row_.alpha_d = agent_.alpha_d();
    row_.c = c;
    double lq = 0.0;
    for (double l : last_.critic_loss) lq += l;
    row_.loss_q = lq / kCritics;
    row_.loss_pi = last_.policy_loss;
    row_.entropy_c = last_.entropy_c;
    row_.entropy_d = last_.entropy_d;
  }

  void check_finite() {
    bool ok = std::isfinite(last_.policy_loss) && std::isfinite(last_.alpha_c) && std::isfinite(last_.max_abs_target);
    for (double l : last_.critic_loss) ok = ok && std::isfinite(l);
    if (ok) return;
    std::string where = "step " + std::to_string(step_) + ", update " + std::to_string(updates_);
    if (!diagnostic_path_.empty()) {
      save_checkpoint(diagnostic_path_);
      where += "; state written to " + diagnostic_path_.string();
    }
    throw DivergenceError("training diverged (non-finite loss) at " + where);
  }

  SacConfig cfg_;
  Task& task_;
  Schedules sched_;
  SacAgent agent_;
  ReplayBuffer buffer_;
  std::mt19937_64 act_rng_, sample_rng_, noise_rng_;
  std::uint64_t step_ = 0, updates_ = 0;
  double avg_return_ = 0.0, avg_power_ = 0.0, avg_sigma_ = 0.0;
  UpdateStats last_;
  TrainLogRow row_;
  std::ostream* log_ = nullptr;
  std::filesystem::path diagnostic_path_;
  std::function<void(std::uint64_t, const ControlAction&, const TaskReward&)> observer_;
};

/// Runs the deterministic policy for `steps` steps and returns the actions
/// and rewards.
struct Rollout {
  std::vector<ControlAction> actions;
  std::vector<TaskReward> rewards;
};

inline Rollout deterministic_rollout(SacAgent& agent, Task& task, std::uint64_t steps) {
  Rollout r;
  std::mt19937_64 unused(0);
  for (std::uint64_t i = 0; i < steps; ++i) {
    const ControlAction a = agent.act(task.history(), false, unused);
    r.actions.push_back(a);
    r.rewards.push_back(task.step(a));
  }
  return r;
}

}  // namespace qtm::sac
