#pragma once

#include "qtm/nn/tape.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace qtm::nn {

using ParamList = std::vector<Parameter*>;

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline void init_fan_in(Parameter& p, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  p.zero_grad();
}

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {
    init_fan_in(weight, in, rng);
    init_fan_in(bias, in, rng);
  }

  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }

  Var operator()(Tape& t, const Var& x, bool trainable = true) {
    if (x.cols() != in_features()) throw ShapeError("Linear " + weight.name + ": input width mismatch");
    return add_row(matmul(x, t.param(weight, trainable)), t.param(bias, trainable));
  }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Kernel-2, stride-2 convolution with a rectified-linear output, plus a
/// linear skip that projects the even-position input onto C_out channels.
///
/// Activations are (batch*length) x channels, row-major, so the two taps of
/// each output position are adjacent rows and pair_rows() forms the patch.
struct ConvBlock {
  Parameter kernel;    // 2*C_in x C_out; rows [0, C_in) act on the first tap
  Parameter bias;      // 1 x C_out
  Parameter residual;  // C_in x C_out

  ConvBlock() = default;
  ConvBlock(const std::string& name, Eigen::Index c_in, Eigen::Index c_out, std::mt19937_64& rng)
      : kernel(name + ".kernel", 2 * c_in, c_out), bias(name + ".bias", 1, c_out),
        residual(name + ".residual", c_in, c_out) {
    init_fan_in(kernel, 2 * c_in, rng);
    init_fan_in(bias, 2 * c_in, rng);
    init_fan_in(residual, c_in, rng);
  }

  Eigen::Index in_channels() const { return residual.value.rows(); }
  Eigen::Index out_channels() const { return residual.value.cols(); }

  /// Pre-activation of the convolution branch.
  Var convolve(Tape& t, const Var& patches, bool trainable = true) {
    return add_row(matmul(patches, t.param(kernel, trainable)), t.param(bias, trainable));
  }

  /// x: (B*L) x C_in with L even -> (B*L/2) x C_out.
  Var operator()(Tape& t, const Var& x, Eigen::Index length, bool trainable = true) {
    if (x.cols() != in_channels()) throw ShapeError("ConvBlock " + kernel.name + ": channel mismatch");
    if (length <= 0 || length % 2 != 0) throw ShapeError("ConvBlock " + kernel.name + ": odd series length");
    if (x.rows() % length != 0) throw ShapeError("ConvBlock " + kernel.name + ": rows not a multiple of length");
    const Var patches = pair_rows(x);
    const Var branch = relu(convolve(t, patches, trainable));
    const Var skip = matmul(slice_cols(patches, 0, in_channels()), t.param(residual, trainable));
    return add(branch, skip);
  }

  void collect(ParamList& out) {
    out.push_back(&kernel);
    out.push_back(&bias);
    out.push_back(&residual);
  }
};

/// log2(N) blocks that reduce an N-step series to a single position.
struct ConvStack {
  std::vector<ConvBlock> blocks;
  Eigen::Index length = 0;

  ConvStack() = default;
  ConvStack(const std::string& name, Eigen::Index c_in, Eigen::Index series_length,
            const std::vector<Eigen::Index>& channels, std::mt19937_64& rng)
      : length(series_length) {
    if (series_length <= 0 || (series_length & (series_length - 1)) != 0)
      throw ShapeError("ConvStack: series length must be a power of two");
    if ((Eigen::Index{1} << channels.size()) != series_length)
      throw ShapeError("ConvStack: need log2(length) blocks, got " + std::to_string(channels.size()));
    Eigen::Index c = c_in;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      blocks.emplace_back(name + ".block" + std::to_string(i), c, channels[i], rng);
      c = channels[i];
    }
  }

  Eigen::Index out_channels() const { return blocks.empty() ? 0 : blocks.back().out_channels(); }

  /// x: (B*N) x C_in, rows ordered batch-major then time -> B x C_out.
  Var operator()(Tape& t, const Var& x, bool trainable = true) {
    Var h = x;
    Eigen::Index l = length;
    for (auto& b : blocks) {
      h = b(t, h, l, trainable);
      l /= 2;
    }
    return h;
  }

  void collect(ParamList& out) {
    for (auto& b : blocks) b.collect(out);
  }
};

/// Fully connected layers with rectified-linear activations between them and
/// a linear output layer.
struct MLP {
  std::vector<Linear> layers;

  MLP() = default;
  MLP(const std::string& name, Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
      std::mt19937_64& rng) {
    Eigen::Index w = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers.emplace_back(name + ".fc" + std::to_string(i), w, hidden[i], rng);
      w = hidden[i];
    }
    layers.emplace_back(name + ".out", w, out, rng);
  }

  Var operator()(Tape& t, const Var& x, bool trainable = true) {
    Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](t, h, trainable);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
  }

  void collect(ParamList& out) {
    for (auto& l : layers) l.collect(out);
  }
};

inline std::size_t parameter_count(const ParamList& ps) {
  std::size_t n = 0;
  for (const Parameter* p : ps) n += static_cast<std::size_t>(p->value.size());
  return n;
}

inline void zero_grads(const ParamList& ps) {
  for (Parameter* p : ps) p->zero_grad();
}

/// target <- rho * target + (1 - rho) * online, parameter by parameter.
inline void polyak_update(const ParamList& target, const ParamList& online, double rho) {
  if (target.size() != online.size()) throw ShapeError("polyak_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->value.rows() != online[i]->value.rows() || target[i]->value.cols() != online[i]->value.cols())
      throw ShapeError("polyak_update: shape mismatch at " + target[i]->name);
    target[i]->value = rho * target[i]->value + (1.0 - rho) * online[i]->value;
  }
}

inline void copy_values(const ParamList& dst, const ParamList& src) { polyak_update(dst, src, 0.0); }

}  // namespace qtm::nn
