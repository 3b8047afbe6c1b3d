#pragma once

#include "qtm/nn/layers.hpp"
#include "qtm/sac/replay.hpp"
#include "qtm/sac/task.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qtm::sac {

using nn::Mat;
using nn::Tape;
using nn::Var;

/// Channels per time step: the control rescaled to [-1, 1], then a one-hot
/// discrete action when there is more than one.
inline Eigen::Index input_channels(const ActionSpace& s) {
  return s.n_discrete() > 1 ? 1 + static_cast<Eigen::Index>(s.n_discrete()) : 1;
}

inline double normalize_u(double u, const ActionSpace& s) { return 2.0 * (u - s.u_min) / (s.u_max - s.u_min) - 1.0; }

inline void encode_action(double u, std::uint8_t d, const ActionSpace& s, Eigen::Ref<Mat> row) {
  row.setZero();
  row(0, 0) = normalize_u(u, s);
  if (s.n_discrete() > 1) row(0, 1 + d) = 1.0;
}

/// (B*N) x C_in encoding of B stored histories.
inline Mat encode_states(const std::vector<double>& u, const std::vector<std::uint8_t>& d, std::size_t batch,
                         std::size_t length, const ActionSpace& s) {
  Mat x(static_cast<Eigen::Index>(batch * length), input_channels(s));
  for (std::size_t r = 0; r < batch * length; ++r) encode_action(u[r], d[r], s, x.row(static_cast<Eigen::Index>(r)));
  return x;
}

/// B x C_in encoding of the newest action of each history.
inline Mat encode_last(const std::vector<double>& u, const std::vector<std::uint8_t>& d, std::size_t batch,
                       std::size_t length, const ActionSpace& s) {
  Mat x(static_cast<Eigen::Index>(batch), input_channels(s));
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t r = b * length + length - 1;
    encode_action(u[r], d[r], s, x.row(static_cast<Eigen::Index>(b)));
  }
  return x;
}

/// Flattens one history for the encoders above.
inline void flatten_history(const HistoryState& h, const ActionSpace& s, std::vector<double>& u,
                            std::vector<std::uint8_t>& d) {
  u.resize(h.size());
  d.resize(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const int k = s.index_of(h[i].d);
    if (k < 0) throw std::invalid_argument("sac: history holds an action outside the discrete set");
    u[i] = h[i].u;
    d[i] = static_cast<std::uint8_t>(k);
  }
}

struct PolicyHeads {
  Var logits;     // B x D
  Var mu;         // B x D
  Var log_sigma;  // B x D, unclamped
};

/// Conv stack over the history, concatenated with the newest action, then
/// fully connected layers emitting logits, means and log-deviations for every
/// discrete action.
struct PolicyNet {
  nn::ConvStack conv;
  nn::MLP head;
  Eigen::Index n_discrete = 1;

  PolicyNet() = default;
  PolicyNet(const std::string& name, const ActionSpace& s, std::size_t length,
            const std::vector<Eigen::Index>& channels, const std::vector<Eigen::Index>& hidden, std::mt19937_64& rng)
      : conv(name + ".conv", input_channels(s), static_cast<Eigen::Index>(length), channels, rng),
        head(name + ".fc", conv.out_channels() + input_channels(s), hidden,
             3 * static_cast<Eigen::Index>(s.n_discrete()), rng),
        n_discrete(static_cast<Eigen::Index>(s.n_discrete())) {}

  PolicyHeads operator()(Tape& t, const Mat& states, const Mat& last, bool trainable = true) {
    const Var features = conv(t, t.constant(states), trainable);
    const Var out = head(t, concat_cols(features, t.constant(last)), trainable);
    return {slice_cols(out, 0, n_discrete), slice_cols(out, n_discrete, n_discrete),
            slice_cols(out, 2 * n_discrete, n_discrete)};
  }

  nn::ParamList parameters() {
    nn::ParamList ps;
    conv.collect(ps);
    head.collect(ps);
    return ps;
  }
};

/// Conv stack over the history; its features and the rescaled control feed
/// fully connected layers with one output per discrete action.
struct CriticNet {
  nn::ConvStack conv;
  nn::MLP head;

  CriticNet() = default;
  CriticNet(const std::string& name, const ActionSpace& s, std::size_t length,
            const std::vector<Eigen::Index>& channels, const std::vector<Eigen::Index>& hidden, std::mt19937_64& rng)
      : conv(name + ".conv", input_channels(s), static_cast<Eigen::Index>(length), channels, rng),
        head(name + ".fc", conv.out_channels() + 1, hidden, static_cast<Eigen::Index>(s.n_discrete()), rng) {}

  Var features(Tape& t, const Mat& states, bool trainable = true) { return conv(t, t.constant(states), trainable); }

  /// features: R x C, u_norm: R x 1 -> R x D.
  Var values(Tape& t, const Var& features, const Var& u_norm, bool trainable = true) {
    return head(t, concat_cols(features, u_norm), trainable);
  }

  nn::ParamList parameters() {
    nn::ParamList ps;
    conv.collect(ps);
    head.collect(ps);
    return ps;
  }
};

}  // namespace qtm::sac
