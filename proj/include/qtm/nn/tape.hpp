#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtm::nn {

/// Row-major so that a (rows = batch*length, cols = channels) activation can
/// be re-viewed as (batch*length/2, 2*channels) without moving data.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index r, Eigen::Index c)
      : name(std::move(n)), value(Mat::Zero(r, c)), grad(Mat::Zero(r, c)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order; backward walks it in reverse. A node requires a
/// gradient iff some input does, so subgraphs built only from constants and
/// frozen parameters are never traversed.
class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Tape() { nodes_.reserve(256); }

  Var constant(Mat v) { return push(std::move(v), false); }

  Var scalar_constant(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return constant(std::move(m));
  }

  /// Leaf bound to a parameter; gradients are added to p.grad on backward.
  /// A frozen leaf behaves as a constant.
  Var param(Parameter& p, bool trainable = true) {
    Var v = push(p.value, trainable);
    if (trainable) nodes_[v.id].param = &p;
    return v;
  }

  /// Leaf that accumulates a gradient readable through grad(v).
  Var leaf(Mat v) { return push(std::move(v), true); }

  Node& node(const Var& v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  std::size_t size() const { return nodes_.size(); }

  const Mat& grad(const Var& v) const { return node(v).grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(const Var& out) {
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward: output must be a scalar");
    backward(out, Mat::Ones(1, 1));
  }

  void backward(const Var& out, const Mat& seed) {
    if (!node(out).requires_grad) return;
    accumulate(out.id, seed);
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.param) n.param->grad += n.grad;
    }
  }

  void clear() { nodes_.clear(); }

  /// Adds g into the gradient of node id, allocating on first use.
  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  template <class Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad.array() += g.array();
  }

  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  Var push(Mat v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Mat(), requires_grad, nullptr, {}});
    return Var{this, static_cast<int>(nodes_.size() - 1)};
  }

  /// Appends a node computed from inputs; `make_backward` receives the new
  /// node id and is only invoked when some input requires a gradient.
  template <class F>
  Var op(Mat value, std::initializer_list<Var> inputs, F make_backward) {
    bool rg = false;
    for (const Var& in : inputs) {
      if (in.tape != this) throw std::logic_error("tape: mixing nodes of different tapes");
      rg = rg || needs(in.id);
    }
    Var out = push(std::move(value), rg);
    if (rg) nodes_.back().backward = make_backward(out.id);
    return out;
  }

 private:
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->node(*this).value; }
inline double Var::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar(): node is not 1x1");
  return v(0, 0);
}
inline bool Var::requires_grad() const { return tape->node(*this).requires_grad; }

namespace detail {
inline void same_shape(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}
}  // namespace detail

// ---- primitives -----------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Tape& t = *a.tape;
  Mat v = a.value() * b.value();
  return t.op(std::move(v), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      if (t.needs(a.id)) t.accumulate_expr(a.id, g * b.value().transpose());
      if (t.needs(b.id)) t.accumulate_expr(b.id, a.value().transpose() * g);
    };
  });
}

/// x + 1 * b for a 1 x n row vector b; the only broadcast on the tape.
inline Var add_row(const Var& x, const Var& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Tape& t = *x.tape;
  Mat v = x.value().rowwise() + b.value().row(0);
  return t.op(std::move(v), {x, b}, [&t, x, b](int id) {
    return [&t, x, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      if (t.needs(x.id)) t.accumulate(x.id, g);
      if (t.needs(b.id)) t.accumulate_expr(b.id, g.colwise().sum());
    };
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.op(a.value() + b.value(), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate(a.id, g);
      t.accumulate(b.id, g);
    };
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.op(a.value() - b.value(), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate(a.id, g);
      if (t.needs(b.id)) t.accumulate_expr(b.id, -g);
    };
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  Tape& t = *a.tape;
  return t.op(a.value().cwiseProduct(b.value()), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      if (t.needs(a.id)) t.accumulate_expr(a.id, g.cwiseProduct(b.value()));
      if (t.needs(b.id)) t.accumulate_expr(b.id, g.cwiseProduct(a.value()));
    };
  });
}

inline Var scale(const Var& a, double s) {
  Tape& t = *a.tape;
  return t.op(a.value() * s, {a}, [&t, a, s](int id) {
    return [&t, a, s, id] { t.accumulate_expr(a.id, t.node(Var{&t, id}).grad * s); };
  });
}

inline Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape;
  Mat v = a.value().array() + s;
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] { t.accumulate(a.id, t.node(Var{&t, id}).grad); };
  });
}

/// Multiplies every entry of a by the 1x1 node s.
inline Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: factor must be 1x1");
  Tape& t = *a.tape;
  return t.op(a.value() * s.value()(0, 0), {a, s}, [&t, a, s](int id) {
    return [&t, a, s, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      if (t.needs(a.id)) t.accumulate_expr(a.id, g * s.value()(0, 0));
      if (t.needs(s.id)) {
        Mat gs(1, 1);
        gs(0, 0) = g.cwiseProduct(a.value()).sum();
        t.accumulate(s.id, gs);
      }
    };
  });
}

inline Var relu(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().cwiseMax(0.0);
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate_expr(a.id, (a.value().array() > 0.0).select(g, 0.0));
    };
  });
}

inline Var tanh(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().tanh();
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Tape::Node& n = t.node(Var{&t, id});
      t.accumulate_expr(a.id, n.grad.array() * (1.0 - n.value.array().square()));
    };
  });
}

inline Var exp(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().exp();
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Tape::Node& n = t.node(Var{&t, id});
      t.accumulate_expr(a.id, n.grad.cwiseProduct(n.value));
    };
  });
}

inline Var square(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().array().square();
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] { t.accumulate_expr(a.id, 2.0 * t.node(Var{&t, id}).grad.cwiseProduct(a.value())); };
  });
}

/// log(1 - tanh(z)^2) = 2 (log 2 - z - softplus(-2z)), stable for large |z|.
inline Var log_sech2(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().unaryExpr([](double z) {
    const double x = -2.0 * z;
    const double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return 2.0 * (std::log(2.0) - z - sp);
  });
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate_expr(a.id, g.array() * (-2.0 * a.value().array().tanh()));
    };
  });
}

/// Elementwise clamp; the gradient passes only strictly inside the range.
inline Var clamp(const Var& a, double lo, double hi) {
  Tape& t = *a.tape;
  Mat v = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.op(std::move(v), {a}, [&t, a, lo, hi](int id) {
    return [&t, a, lo, hi, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      const auto inside = (a.value().array() > lo) && (a.value().array() < hi);
      t.accumulate_expr(a.id, inside.select(g, 0.0));
    };
  });
}

/// Elementwise minimum; ties route the gradient to the first argument.
inline Var minimum(const Var& a, const Var& b) {
  detail::same_shape(a, b, "minimum");
  Tape& t = *a.tape;
  Mat v = a.value().cwiseMin(b.value());
  return t.op(std::move(v), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      const auto first = a.value().array() <= b.value().array();
      if (t.needs(a.id)) t.accumulate_expr(a.id, first.select(g, 0.0));
      if (t.needs(b.id)) t.accumulate_expr(b.id, first.select(Mat::Zero(g.rows(), g.cols()), g));
    };
  });
}

inline Var sum(const Var& a) {
  Tape& t = *a.tape;
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const double g = t.node(Var{&t, id}).grad(0, 0);
      t.accumulate_expr(a.id, Mat::Constant(a.rows(), a.cols(), g));
    };
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Sum over columns: (r x c) -> (r x 1).
inline Var row_sum(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value().rowwise().sum();
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate_expr(a.id, g.replicate(1, a.cols()));
    };
  });
}

/// Reinterprets the row-major data with a new shape of equal size.
inline Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: size mismatch");
  Tape& t = *a.tape;
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      t.accumulate_expr(a.id, Eigen::Map<const Mat>(g.data(), a.rows(), a.cols()));
    };
  });
}

/// (n x c) -> (n/2 x 2c): row 2i and row 2i+1 concatenated.
inline Var pair_rows(const Var& a) {
  if (a.rows() % 2 != 0) throw ShapeError("pair_rows: odd number of rows");
  return reshape(a, a.rows() / 2, 2 * a.cols());
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n <= 0 || start + n > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tape& t = *a.tape;
  Mat v = a.value().middleCols(start, n);
  return t.op(std::move(v), {a}, [&t, a, start, n](int id) {
    return [&t, a, start, n, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      Mat full = Mat::Zero(a.rows(), a.cols());
      full.middleCols(start, n) = g;
      t.accumulate(a.id, full);
    };
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Tape& t = *a.tape;
  Mat v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.value();
  v.rightCols(b.cols()) = b.value();
  return t.op(std::move(v), {a, b}, [&t, a, b](int id) {
    return [&t, a, b, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      if (t.needs(a.id)) t.accumulate_expr(a.id, g.leftCols(a.cols()));
      if (t.needs(b.id)) t.accumulate_expr(b.id, g.rightCols(b.cols()));
    };
  });
}

/// Each row repeated k times in place: row i goes to rows i*k .. i*k+k-1.
inline Var repeat_rows(const Var& a, Eigen::Index k) {
  if (k <= 0) throw ShapeError("repeat_rows: k must be positive");
  Tape& t = *a.tape;
  Mat v(a.rows() * k, a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) v.middleRows(i * k, k) = a.value().row(i).replicate(k, 1);
  return t.op(std::move(v), {a}, [&t, a, k](int id) {
    return [&t, a, k, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      Mat ga(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) ga.row(i) = g.middleRows(i * k, k).colwise().sum();
      t.accumulate(a.id, ga);
    };
  });
}

/// Row-wise log-softmax.
inline Var log_softmax_rows(const Var& a) {
  Tape& t = *a.tape;
  Mat v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    const double lse = m + std::log((v.row(i).array() - m).exp().sum());
    v.row(i).array() -= lse;
  }
  return t.op(std::move(v), {a}, [&t, a](int id) {
    return [&t, a, id] {
      const Tape::Node& n = t.node(Var{&t, id});
      const Mat p = n.value.array().exp();
      Mat ga = n.grad - (p.array().colwise() * n.grad.rowwise().sum().array()).matrix();
      t.accumulate(a.id, ga);
    };
  });
}

/// out(i, 0) = a(i, idx[i]).
inline Var gather_cols(const Var& a, const std::vector<int>& idx) {
  if (static_cast<Eigen::Index>(idx.size()) != a.rows()) throw ShapeError("gather_cols: one index per row");
  for (int j : idx)
    if (j < 0 || j >= a.cols()) throw ShapeError("gather_cols: index out of range");
  Tape& t = *a.tape;
  Mat v(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) v(i, 0) = a.value()(i, idx[static_cast<std::size_t>(i)]);
  return t.op(std::move(v), {a}, [&t, a, idx](int id) {
    return [&t, a, idx, id] {
      const Mat& g = t.node(Var{&t, id}).grad;
      Mat ga = Mat::Zero(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i) ga(i, idx[static_cast<std::size_t>(i)]) = g(i, 0);
      t.accumulate(a.id, ga);
    };
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace qtm::nn
