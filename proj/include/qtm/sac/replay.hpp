#pragma once

#include "qtm/common/binary_io.hpp"
#include "qtm/env/history.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace qtm::sac {

using env::ControlAction;
using env::Coupling;
using env::HistoryState;

/// One stored step. The next state is the state shifted by one with
/// `action` appended, so it is reconstructed rather than stored.
struct Transition {
  HistoryState state;
  ControlAction action;
  double r_power = 0.0;
  double r_sigma = 0.0;

  HistoryState next_state() const {
    HistoryState h = state;
    h.push(action);
    return h;
  }
};

/// Batch laid out for the networks: row b*N + t holds action t (oldest first)
/// of state b.
struct Batch {
  std::size_t size = 0;
  std::size_t length = 0;
  std::vector<double> state_u, next_u;
  std::vector<std::uint8_t> state_d, next_d;  // indices into the discrete set
  std::vector<double> action_u;
  std::vector<std::uint8_t> action_d;
  std::vector<double> r_power, r_sigma;
};

/// Fixed-capacity FIFO of transitions. Actions are stored as a control value
/// and an index into the discrete set.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t history_length, std::vector<Coupling> discrete)
      : cap_(capacity), n_(history_length), discrete_(std::move(discrete)) {
    if (cap_ == 0) throw std::invalid_argument("replay: capacity must be positive");
    if (n_ == 0) throw std::invalid_argument("replay: history length must be positive");
    if (discrete_.empty() || discrete_.size() > 255) throw std::invalid_argument("replay: bad discrete set");
    u_.resize(cap_ * n_);
    d_.resize(cap_ * n_);
    au_.resize(cap_);
    ad_.resize(cap_);
    rp_.resize(cap_);
    rs_.resize(cap_);
  }

  std::size_t capacity() const { return cap_; }
  std::size_t size() const { return size_; }
  std::size_t history_length() const { return n_; }
  std::uint64_t total_pushed() const { return pushed_; }

  void push(const Transition& t) {
    if (t.state.size() != n_) throw std::invalid_argument("replay: state length mismatch");
    const std::size_t slot = head_;
    for (std::size_t i = 0; i < n_; ++i) {
      u_[slot * n_ + i] = t.state[i].u;
      d_[slot * n_ + i] = index(t.state[i].d);
    }
    au_[slot] = t.action.u;
    ad_[slot] = index(t.action.d);
    rp_[slot] = t.r_power;
    rs_[slot] = t.r_sigma;
    head_ = (head_ + 1) % cap_;
    if (size_ < cap_) ++size_;
    ++pushed_;
  }

  /// i-th transition, oldest first.
  Transition at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay: index out of range");
    const std::size_t slot = physical(i);
    std::vector<ControlAction> acts(n_);
    for (std::size_t k = 0; k < n_; ++k) acts[k] = {u_[slot * n_ + k], discrete_[d_[slot * n_ + k]]};
    HistoryState h(n_, acts.front());
    for (const auto& a : acts) h.push(a);
    return {h, {au_[slot], discrete_[ad_[slot]]}, rp_[slot], rs_[slot]};
  }

  /// k distinct indices uniformly from [0, size) by Floyd's algorithm, in
  /// draw order.
  std::vector<std::size_t> sample_indices(std::size_t k, std::mt19937_64& rng) const {
    if (k > size_) throw std::invalid_argument("replay: batch larger than buffer contents");
    std::vector<std::size_t> out;
    out.reserve(k);
    std::unordered_set<std::size_t> seen;
    seen.reserve(2 * k);
    for (std::size_t j = size_ - k; j < size_; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      const std::size_t pick = seen.count(t) ? j : t;
      seen.insert(pick);
      out.push_back(pick);
    }
    return out;
  }

  Batch gather(const std::vector<std::size_t>& idx) const {
    Batch b;
    b.size = idx.size();
    b.length = n_;
    b.state_u.resize(b.size * n_);
    b.next_u.resize(b.size * n_);
    b.state_d.resize(b.size * n_);
    b.next_d.resize(b.size * n_);
    b.action_u.resize(b.size);
    b.action_d.resize(b.size);
    b.r_power.resize(b.size);
    b.r_sigma.resize(b.size);
    for (std::size_t r = 0; r < b.size; ++r) {
      if (idx[r] >= size_) throw std::out_of_range("replay: index out of range");
      const std::size_t slot = physical(idx[r]);
      for (std::size_t k = 0; k < n_; ++k) {
        b.state_u[r * n_ + k] = u_[slot * n_ + k];
        b.state_d[r * n_ + k] = d_[slot * n_ + k];
      }
      for (std::size_t k = 0; k + 1 < n_; ++k) {
        b.next_u[r * n_ + k] = u_[slot * n_ + k + 1];
        b.next_d[r * n_ + k] = d_[slot * n_ + k + 1];
      }
      b.next_u[r * n_ + n_ - 1] = au_[slot];
      b.next_d[r * n_ + n_ - 1] = ad_[slot];
      b.action_u[r] = au_[slot];
      b.action_d[r] = ad_[slot];
      b.r_power[r] = rp_[slot];
      b.r_sigma[r] = rs_[slot];
    }
    return b;
  }

  Batch sample(std::size_t k, std::mt19937_64& rng) const { return gather(sample_indices(k, rng)); }

  void save(std::ostream& os) const {
    io::write_pod<std::uint64_t>(os, cap_);
    io::write_pod<std::uint64_t>(os, n_);
    io::write_pod<std::uint64_t>(os, size_);
    io::write_pod<std::uint64_t>(os, head_);
    io::write_pod<std::uint64_t>(os, pushed_);
    io::write_doubles(os, u_.data(), u_.size());
    os.write(reinterpret_cast<const char*>(d_.data()), static_cast<std::streamsize>(d_.size()));
    io::write_doubles(os, au_.data(), au_.size());
    os.write(reinterpret_cast<const char*>(ad_.data()), static_cast<std::streamsize>(ad_.size()));
    io::write_doubles(os, rp_.data(), rp_.size());
    io::write_doubles(os, rs_.data(), rs_.size());
  }

  void load(std::istream& is) {
    if (io::read_pod<std::uint64_t>(is) != cap_ || io::read_pod<std::uint64_t>(is) != n_)
      throw std::runtime_error("replay: checkpoint shape mismatch");
    size_ = io::read_pod<std::uint64_t>(is);
    head_ = io::read_pod<std::uint64_t>(is);
    pushed_ = io::read_pod<std::uint64_t>(is);
    if (size_ > cap_ || head_ >= cap_) throw std::runtime_error("replay: corrupt checkpoint");
    io::read_doubles(is, u_.data(), u_.size());
    is.read(reinterpret_cast<char*>(d_.data()), static_cast<std::streamsize>(d_.size()));
    io::read_doubles(is, au_.data(), au_.size());
    is.read(reinterpret_cast<char*>(ad_.data()), static_cast<std::streamsize>(ad_.size()));
    io::read_doubles(is, rp_.data(), rp_.size());
    io::read_doubles(is, rs_.data(), rs_.size());
    if (!is) throw std::runtime_error("replay: truncated checkpoint");
  }

 private:
  std::uint8_t index(Coupling d) const {
    for (std::size_t i = 0; i < discrete_.size(); ++i)
      if (discrete_[i] == d) return static_cast<std::uint8_t>(i);
    throw std::invalid_argument("replay: action outside discrete set");
  }

  std::size_t physical(std::size_t i) const { return size_ < cap_ ? i : (head_ + i) % cap_; }

  std::size_t cap_, n_;
  std::vector<Coupling> discrete_;
  std::vector<double> u_;
  std::vector<std::uint8_t> d_;
  std::vector<double> au_;
  std::vector<std::uint8_t> ad_;
  std::vector<double> rp_, rs_;
  std::size_t size_ = 0, head_ = 0;
  std::uint64_t pushed_ = 0;
};

}  // namespace qtm::sac
