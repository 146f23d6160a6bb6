#include "rrl/ad.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace rrl::ad {

const Mat& Var::value() const { return tape_->value_of(id_); }

const Mat& Var::grad() const { return tape_->grad_of(id_); }

const Mat& Tape::value_of(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external != nullptr ? *n.external : n.value;
}

Mat& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Mat& v = value_of(id);
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::accumulate(int id, const Mat& g) {
  if (!needs_grad(id)) return;
  grad_of(id) += g;
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(const Mat& value, Mat* grad_sink) {
  Node n;
  n.external = &value;
  n.sink = grad_sink;
  n.needs_grad = grad_enabled_ && grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward back) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (needs_grad(p.id())) {
        n.needs_grad = true;
        break;
      }
    }
  }
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& out, double seed) {
  if (!grad_enabled_) throw std::logic_error("backward on a tape without gradients");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!needs_grad(out.id())) return;
  grad_of(out.id()).setConstant(seed);
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, id);
    if (n.sink != nullptr) *n.sink += n.grad;
  }
}

namespace {

Tape& tape_of(const Var& a) {
  assert(a.valid());
  return *a.tape();
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = tape_of(a);
  int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_of(ia).noalias() += g * t.value_of(ib).transpose();
    if (t.needs_grad(ib)) t.grad_of(ib).noalias() += t.value_of(ia).transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = tape_of(a);
  int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = tape_of(a);
  int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    if (t.needs_grad(ib)) t.grad_of(ib) -= g;
  });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b, "hadamard");
  Tape& t = tape_of(a);
  int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_of(ia) += g.cwiseProduct(t.value_of(ib));
    if (t.needs_grad(ib)) t.grad_of(ib) += g.cwiseProduct(t.value_of(ia));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia) += t.grad_of(self) * s;
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: scalar expected");
  Tape& t = tape_of(a);
  int ia = a.id(), is = s.id();
  return t.record(a.value() * s.scalar(), {a, s}, [ia, is](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_of(ia) += g * t.value_of(is)(0, 0);
    if (t.needs_grad(is)) t.grad_of(is)(0, 0) += g.cwiseProduct(t.value_of(ia)).sum();
  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().array() + s, {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Tape& t = tape_of(a);
  int ia = a.id(), ir = row.id();
  Mat v = a.value();
  v.rowwise() += row.value().row(0);
  return t.record(std::move(v), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.grad_of(ir) += g.colwise().sum();
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  Tape& t = tape_of(a);
  int ia = a.id(), ir = row.id();
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(v), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      t.grad_of(ia).array() += g.array().rowwise() * t.value_of(ir).row(0).array();
    }
    if (t.needs_grad(ir)) t.grad_of(ir) += g.cwiseProduct(t.value_of(ia)).colwise().sum();
  });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia) += t.grad_of(self).transpose();
  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().array().tanh().matrix(), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& y = t.value_of(self);
    t.grad_of(ia).array() += t.grad_of(self).array() * (1.0 - y.array().square());
  });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia) += t.grad_of(self).cwiseProduct(t.value_of(self));
  });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().array().square().matrix(), {a}, [ia](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia) += 2.0 * t.grad_of(self).cwiseProduct(t.value_of(ia));
  });
}

Var minimum(const Var& a, const Var& b) {
  check_same_shape(a, b, "minimum");
  Tape& t = tape_of(a);
  int ia = a.id(), ib = b.id();
  // Ties route the gradient to `a`.
  return t.record(a.value().cwiseMin(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& va = t.value_of(ia);
    const Mat& vb = t.value_of(ib);
    if (t.needs_grad(ia)) t.grad_of(ia).array() += (va.array() <= vb.array()).cast<double>() * g.array();
    if (t.needs_grad(ib)) t.grad_of(ib).array() += (va.array() > vb.array()).cast<double>() * g.array();
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tape& t = tape_of(a);
  int ia = a.id();
  Mat v = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(v), {a}, [ia, lo, hi](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& x = t.value_of(ia);
    t.grad_of(ia).array() += ((x.array() >= lo) && (x.array() <= hi)).cast<double>() * t.grad_of(self).array();
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return t.record(std::move(v), {a}, [ia](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia).array() += t.grad_of(self)(0, 0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
  Tape& t = tape_of(a);
  int ia = a.id();
  const double n = static_cast<double>(a.rows());
  Mat v = a.value().colwise().mean();
  return t.record(std::move(v), {a}, [ia, n](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    t.grad_of(ia).rowwise() += t.grad_of(self).row(0) / n;
  });
}

Var logsumexp_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("logsumexp_rows: empty input");
  Tape& t = tape_of(a);
  int ia = a.id();
  const Mat& x = a.value();
  Eigen::RowVectorXd mx = x.colwise().maxCoeff();
  Mat w = (x.rowwise() - mx).array().exp().matrix();
  Eigen::RowVectorXd s = w.colwise().sum();
  Mat v(1, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) v(0, c) = mx(c) + std::log(s(c));
  return t.record(std::move(v), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& x = t.value_of(ia);
    const Mat& y = t.value_of(self);
    Mat p = (x.rowwise() - y.row(0)).array().exp().matrix();
    t.grad_of(ia).array() += p.array().rowwise() * t.grad_of(self).row(0).array();
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  const Mat& x = a.value();
  Mat y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return t.record(std::move(y), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& y = t.value_of(self);
    const Mat& g = t.grad_of(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    t.grad_of(ia).array() += y.array() * (g.colwise() - dot).array();
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  int ia = a.id();
  const Mat& x = a.value();
  Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Mat shifted = x.colwise() - mx;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  Mat y = shifted.colwise() - lse;
  return t.record(std::move(y), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& y = t.value_of(self);
    const Mat& g = t.grad_of(self);
    Eigen::VectorXd gs = g.rowwise().sum();
    Mat p = y.array().exp().matrix();
    t.grad_of(ia) += g - (p.array().colwise() * gs.array()).matrix();
  });
}

Var pick(const Var& a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw std::out_of_range("pick: index out of range");
  Tape& t = tape_of(a);
  int ia = a.id();
  Mat v(1, 1);
  v(0, 0) = a.value()(r, c);
  return t.record(std::move(v), {a}, [ia, r, c](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia)(r, c) += t.grad_of(self)(0, 0);
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Tape& t = tape_of(a);
  int ia = a.id();
  const Mat& x = a.value();
  Mat v(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw std::out_of_range("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t.record(std::move(v), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Mat& g = t.grad_of(self);
    Mat& ga = t.grad_of(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows: out of range");
  Tape& t = tape_of(a);
  int ia = a.id();
  return t.record(a.value().middleRows(start, count), {a}, [ia, start, count](Tape& t, int self) {
    if (t.needs_grad(ia)) t.grad_of(ia).middleRows(start, count) += t.grad_of(self);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
    any_grad = any_grad || t.needs_grad(p.id());
  }
  Var anchor = any_grad ? *std::find_if(parts.begin(), parts.end(), [&](const Var& p) { return t.needs_grad(p.id()); })
                        : parts[0];
  return t.record(std::move(v), {anchor}, [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      Mat& gi = t.grad_of(ids[i]);
      gi += g.middleRows(offsets[i], gi.rows());
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
    any_grad = any_grad || t.needs_grad(p.id());
  }
  Var anchor = any_grad ? *std::find_if(parts.begin(), parts.end(), [&](const Var& p) { return t.needs_grad(p.id()); })
                        : parts[0];
  return t.record(std::move(v), {anchor}, [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.needs_grad(ids[i])) continue;
      Mat& gi = t.grad_of(ids[i]);
      gi += g.middleCols(offsets[i], gi.cols());
    }
  });
}

}  // namespace rrl::ad
