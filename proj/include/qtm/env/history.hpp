#pragma once

#include "qtm/sim/common.hpp"

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qtm::env {

using sim::Coupling;

struct ControlAction {
  double u = 0.0;
  Coupling d = Coupling::None;

  friend bool operator==(const ControlAction&, const ControlAction&) = default;
};

/// Fixed-length ring of the most recent actions, indexed oldest first.
class HistoryState {
 public:
  HistoryState() = default;

  HistoryState(std::size_t n, ControlAction fill) : buf_(n, fill) {
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("HistoryState: length must be a power of two");
  }

  std::size_t size() const { return buf_.size(); }

  const ControlAction& operator[](std::size_t i) const { return buf_[(head_ + i) & (buf_.size() - 1)]; }

  const ControlAction& newest() const { return (*this)[buf_.size() - 1]; }

  /// Drops the oldest action and appends a.
  void push(const ControlAction& a) {
    buf_[head_] = a;
    head_ = (head_ + 1) & (buf_.size() - 1);
  }

  std::vector<ControlAction> to_vector() const {
    std::vector<ControlAction> out;
    out.reserve(buf_.size());
    for (std::size_t i = 0; i < buf_.size(); ++i) out.push_back((*this)[i]);
    return out;
  }

  /// Number of actions among the most recent `window` that couple bath b.
  int count_bath(sim::Bath b, std::size_t window) const {
    if (window > buf_.size()) window = buf_.size();
    int n = 0;
    for (std::size_t i = buf_.size() - window; i < buf_.size(); ++i) n += sim::couples((*this)[i].d, b) ? 1 : 0;
    return n;
  }

  friend bool operator==(const HistoryState& a, const HistoryState& b) { return a.to_vector() == b.to_vector(); }

 private:
  std::vector<ControlAction> buf_;
  std::size_t head_ = 0;
};

}  // namespace qtm::env
