#pragma once

// Minimal tape-based reverse-mode automatic differentiation over dense
// double matrices. Every model in the lab (QA environment, rewriter policy)
// is written against these ops, so one gradient-checked core serves training,
// PPO and integrated gradients.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace rrl::ad {

using Mat = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  // Gradient of the last backward() pass; zero-sized if the node took no part.
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Convenience for 1x1 nodes.
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A value that never receives gradient.
  Var constant(Mat value);
  // A differentiable leaf owned by the tape; read its grad() after backward.
  Var leaf(Mat value);
  // A view of an externally owned parameter. Backward adds into `grad_sink`.
  // The referenced matrices must outlive the tape.
  Var param(const Mat& value, Mat* grad_sink);

  // Seeds d(out)/d(out) = seed (default 1 for a 1x1 output) and propagates.
  void backward(const Var& out, double seed = 1.0);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Op plumbing. `parents` lists inputs; `back` runs with this node's grad.
  using Backward = std::function<void(Tape&, int)>;
  Var record(Mat value, std::initializer_list<Var> parents, Backward back);

  const Mat& value_of(int id) const;
  Mat& grad_of(int id);
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Adds `g` into the gradient buffer of node `id` (no-op for constants).
  void accumulate(int id, const Mat& g);

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat* sink = nullptr;
    Mat grad;
    Backward back;
    bool needs_grad = false;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// Elementwise / algebraic ops. Shapes follow Eigen conventions.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Multiplies every entry of `a` by the 1x1 node `s`.
Var scale_by(const Var& a, const Var& s);
Var add_scalar(const Var& a, double s);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) * row (1 x m) broadcast over rows, elementwise.
Var mul_row(const Var& a, const Var& row);
Var transpose(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
Var minimum(const Var& a, const Var& b);
// Clamps values; gradient is zero where the clamp is active.
Var clamp(const Var& a, double lo, double hi);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_rows(const Var& a);        // (n x m) -> (1 x m)
Var logsumexp_rows(const Var& a);   // (n x m) -> (1 x m), reduces over rows
Var softmax_rows(const Var& a);     // each row normalized
Var log_softmax_rows(const Var& a);
Var pick(const Var& a, Eigen::Index r, Eigen::Index c);  // -> 1x1

// Structural ops.
Var gather_rows(const Var& a, std::span<const int> rows);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

}  // namespace rrl::ad
