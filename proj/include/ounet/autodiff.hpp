#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ounet/errors.hpp"
#include "ounet/index_table.hpp"

namespace ounet::ad {

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Test hook: when set, the matmul backward rule is deliberately wrong so that
// gradient checking can be shown to catch it.
inline std::atomic<bool> g_inject_backward_fault{false};

template <typename Real>
class Tape;

template <typename Real>
struct Node {
  Matrix<Real> value;
  Matrix<Real> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Matrix<Real>& grad_ref() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix<Real>::Zero(value.rows(), value.cols());
    return grad;
  }
  bool has_grad() const { return grad.rows() == value.rows() && grad.cols() == value.cols(); }
};

// Handle to a tape-recorded matrix. Cheap to copy; keeps its storage alive.
template <typename Real>
class Value {
 public:
  Value() = default;
  Value(Tape<Real>* tape, std::shared_ptr<Node<Real>> node) : tape_(tape), node_(std::move(node)) {}

  bool valid() const noexcept { return node_ != nullptr; }
  Tape<Real>& tape() const { return *tape_; }
  const Matrix<Real>& data() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Real item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() requires a 1x1 value");
    return node_->value(0, 0);
  }
  Matrix<Real> grad() const {
    return node_->has_grad() ? node_->grad : Matrix<Real>::Zero(rows(), cols());
  }
  Node<Real>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Real>>& shared() const { return node_; }

 private:
  Tape<Real>* tape_ = nullptr;
  std::shared_ptr<Node<Real>> node_;
};

// Append-only record of the differentiable computation. Only values that require
// a gradient are kept on the tape; everything else is freed as soon as its
// handles go out of scope.
template <typename Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value<Real> leaf(Matrix<Real> data, bool requires_grad = true) {
    auto node = std::make_shared<Node<Real>>();
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) nodes_.push_back(node);
    return Value<Real>(this, std::move(node));
  }
  Value<Real> constant(Matrix<Real> data) { return leaf(std::move(data), false); }

  // Records a primitive application. `backward` receives the output node and is
  // only kept when some input requires a gradient.
  template <typename Fn>
  Value<Real> record(Matrix<Real> out, std::initializer_list<Value<Real>> inputs, Fn&& backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || v.requires_grad();
    auto node = std::make_shared<Node<Real>>();
    node->value = std::move(out);
    node->requires_grad = needs;
    if (needs) {
      node->backward = std::forward<Fn>(backward);
      nodes_.push_back(node);
    }
    return Value<Real>(this, std::move(node));
  }

  // Populates d(root)/d(v) for every recorded value v. Grads are zeroed first.
  void backward(const Value<Real>& root) {
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be 1x1");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    if (!root.requires_grad()) return;
    root.node()->grad_ref()(0, 0) = Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Real>& n = **it;
      if (n.backward && n.has_grad()) n.backward(n);
    }
  }

  void clear() { nodes_.clear(); signature_ = kSignatureSeed; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Running hash over every relu activation pattern in this tape's forward pass.
  // Two forwards with equal signatures took the same piecewise-linear branch.
  void mix_signature(std::uint64_t bits) {
    signature_ ^= bits + 0x9e3779b97f4a7c15ull + (signature_ << 6) + (signature_ >> 2);
  }
  std::uint64_t signature() const noexcept { return signature_; }

 private:
  static constexpr std::uint64_t kSignatureSeed = 0xcbf29ce484222325ull;
  std::vector<std::shared_ptr<Node<Real>>> nodes_;
  std::uint64_t signature_ = kSignatureSeed;
};

namespace detail {

template <typename Real>
void accumulate(const Value<Real>& v, const Matrix<Real>& g) {
  if (v.requires_grad()) v.node()->grad_ref() += g;
}

template <typename Real>
Tape<Real>& tape_of(const Value<Real>& v) {
  if (!v.valid()) throw InternalError("operation on an empty value");
  return v.tape();
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Real>
void require_same_shape(const Value<Real>& a, const Value<Real>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

template <typename Real>
Value<Real> matmul(const Value<Real>& a, const Value<Real>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ (" + detail::shape_str(a.rows(), a.cols()) +
                     " * " + detail::shape_str(b.rows(), b.cols()) + ")");
  Matrix<Real> out(a.rows(), b.cols());
  out.noalias() = a.data() * b.data();
  return detail::tape_of(a).record(std::move(out), {a, b}, [a, b](Node<Real>& self) {
    if (a.requires_grad()) {
      if (g_inject_backward_fault.load(std::memory_order_relaxed))
        a.node()->grad_ref().noalias() += Real(1.1) * (self.grad * b.data().transpose());
      else
        a.node()->grad_ref().noalias() += self.grad * b.data().transpose();
    }
    if (b.requires_grad()) b.node()->grad_ref().noalias() += a.data().transpose() * self.grad;
  });
}

template <typename Real>
Value<Real> add(const Value<Real>& a, const Value<Real>& b) {
  detail::require_same_shape(a, b, "add");
  Matrix<Real> out = a.data() + b.data();
  return detail::tape_of(a).record(std::move(out), {a, b}, [a, b](Node<Real>& self) {
    detail::accumulate(a, self.grad);
    detail::accumulate(b, self.grad);
  });
}

// a + row, broadcasting a 1 x C row over every row of a.
template <typename Real>
Value<Real> add_row(const Value<Real>& a, const Value<Real>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x C");
  Matrix<Real> out = a.data().rowwise() + row.data().row(0);
  return detail::tape_of(a).record(std::move(out), {a, row}, [a, row](Node<Real>& self) {
    detail::accumulate(a, self.grad);
    if (row.requires_grad()) row.node()->grad_ref() += self.grad.colwise().sum();
  });
}

// a * row elementwise per column.
template <typename Real>
Value<Real> mul_row(const Value<Real>& a, const Value<Real>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: scale must be 1 x C");
  Matrix<Real> out = a.data().array().rowwise() * row.data().row(0).array();
  return detail::tape_of(a).record(std::move(out), {a, row}, [a, row](Node<Real>& self) {
    if (a.requires_grad())
      a.node()->grad_ref().array() += self.grad.array().rowwise() * row.data().row(0).array();
    if (row.requires_grad())
      row.node()->grad_ref() += (self.grad.array() * a.data().array()).matrix().colwise().sum();
  });
}

template <typename Real>
Value<Real> scale(const Value<Real>& a, Real s) {
  Matrix<Real> out = a.data() * s;
  return detail::tape_of(a).record(std::move(out), {a}, [a, s](Node<Real>& self) {
    if (a.requires_grad()) a.node()->grad_ref() += self.grad * s;
  });
}

template <typename Real>
Value<Real> relu(const Value<Real>& a) {
  Matrix<Real> out = a.data().cwiseMax(Real(0));
  Tape<Real>& tape = detail::tape_of(a);
  {
    std::uint64_t word = 0;
    int bit = 0;
    const Real* p = a.data().data();
    for (Eigen::Index i = 0; i < a.data().size(); ++i) {
      word |= static_cast<std::uint64_t>(p[i] > Real(0)) << bit;
      if (++bit == 64) {
        tape.mix_signature(word);
        word = 0;
        bit = 0;
      }
    }
    tape.mix_signature(word ^ static_cast<std::uint64_t>(a.data().size()));
  }
  return tape.record(std::move(out), {a}, [a](Node<Real>& self) {
    if (!a.requires_grad()) return;
    auto& g = a.node()->grad_ref();
    g.array() += (a.data().array() > Real(0)).template cast<Real>() * self.grad.array();
  });
}

template <typename Real>
Value<Real> sum(const Value<Real>& a) {
  Matrix<Real> out(1, 1);
  out(0, 0) = a.data().sum();
  return detail::tape_of(a).record(std::move(out), {a}, [a](Node<Real>& self) {
    if (a.requires_grad()) a.node()->grad_ref().array() += self.grad(0, 0);
  });
}

// out[n, k*C + c] = x[idx(n,k), c], with sentinel entries reading a zero row.
template <typename Real>
Value<Real> gather_rows(const Value<Real>& x, const IndexTable& idx) {
  const Eigen::Index c = x.cols();
  Matrix<Real> out = Matrix<Real>::Zero(static_cast<Eigen::Index>(idx.rows),
                                        static_cast<Eigen::Index>(idx.cols) * c);
  const Eigen::Index nrows = x.rows();
  for (std::size_t r = 0; r < idx.rows; ++r)
    for (std::size_t k = 0; k < idx.cols; ++k) {
      const std::int32_t src = idx(r, k);
      if (src == kSentinel) continue;
      if (src < 0 || src >= nrows) throw ShapeError("gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(r)).segment(static_cast<Eigen::Index>(k) * c, c) =
          x.data().row(src);
    }
  auto table = std::make_shared<const IndexTable>(idx);
  return detail::tape_of(x).record(std::move(out), {x}, [x, table, c](Node<Real>& self) {
    if (!x.requires_grad()) return;
    auto& g = x.node()->grad_ref();
    for (std::size_t r = 0; r < table->rows; ++r)
      for (std::size_t k = 0; k < table->cols; ++k) {
        const std::int32_t dst = (*table)(r, k);
        if (dst == kSentinel) continue;
        g.row(dst) += self.grad.row(static_cast<Eigen::Index>(r))
                          .segment(static_cast<Eigen::Index>(k) * c, c);
      }
  });
}

// out[idx[n]] += y[n]; the adjoint of a single-column gather.
template <typename Real>
Value<Real> scatter_add_rows(const Value<Real>& y, const IndexTable& idx, Eigen::Index out_rows) {
  if (idx.cols != 1 || static_cast<Eigen::Index>(idx.rows) != y.rows())
    throw ShapeError("scatter_add_rows: index must be a column matching y's rows");
  Matrix<Real> out = Matrix<Real>::Zero(out_rows, y.cols());
  for (std::size_t r = 0; r < idx.rows; ++r) {
    const std::int32_t dst = idx(r, 0);
    if (dst == kSentinel) continue;
    if (dst < 0 || dst >= out_rows) throw ShapeError("scatter_add_rows: index out of range");
    out.row(dst) += y.data().row(static_cast<Eigen::Index>(r));
  }
  auto table = std::make_shared<const IndexTable>(idx);
  return detail::tape_of(y).record(std::move(out), {y}, [y, table](Node<Real>& self) {
    if (!y.requires_grad()) return;
    auto& g = y.node()->grad_ref();
    for (std::size_t r = 0; r < table->rows; ++r) {
      const std::int32_t src = (*table)(r, 0);
      if (src != kSentinel) g.row(static_cast<Eigen::Index>(r)) += self.grad.row(src);
    }
  });
}

// Row segments (e.g. samples of a batch) crossed with channel groups.
struct GroupLayout {
  std::shared_ptr<const std::vector<std::int32_t>> segment;  // per row
  int num_segments = 1;
  int groups = 1;

  static GroupLayout make(std::vector<std::int32_t> seg, int num_segments, int groups) {
    return {std::make_shared<const std::vector<std::int32_t>>(std::move(seg)), num_segments, groups};
  }

  template <typename Real>
  void validate(const Value<Real>& x) const {
    if (!segment || static_cast<Eigen::Index>(segment->size()) != x.rows())
      throw ShapeError("group layout must give one segment id per row");
    if (groups < 1 || x.cols() % groups != 0)
      throw ConfigError("channels (" + std::to_string(x.cols()) + ") not divisible by groups (" +
                        std::to_string(groups) + ")");
  }
  std::vector<double> counts(Eigen::Index cols) const {
    std::vector<double> n(static_cast<std::size_t>(num_segments), 0.0);
    for (auto s : *segment) n[static_cast<std::size_t>(s)] += 1.0;
    for (auto& v : n) v *= static_cast<double>(cols / groups);
    return n;
  }
};

// Mean per (segment, group): num_segments x groups.
template <typename Real>
Value<Real> row_group_mean(const Value<Real>& x, const GroupLayout& layout) {
  layout.validate(x);
  const Eigen::Index gs = x.cols() / layout.groups;
  const auto counts = layout.counts(x.cols());
  Matrix<Real> out = Matrix<Real>::Zero(layout.num_segments, layout.groups);
  const auto& seg = *layout.segment;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (int g = 0; g < layout.groups; ++g)
      out(seg[static_cast<std::size_t>(r)], g) += x.data().row(r).segment(g * gs, gs).sum();
  for (int s = 0; s < layout.num_segments; ++s)
    if (counts[static_cast<std::size_t>(s)] > 0) out.row(s) /= Real(counts[static_cast<std::size_t>(s)]);
  return detail::tape_of(x).record(std::move(out), {x}, [x, layout, gs, counts](Node<Real>& self) {
    if (!x.requires_grad()) return;
    auto& g = x.node()->grad_ref();
    const auto& seg = *layout.segment;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto s = static_cast<std::size_t>(seg[static_cast<std::size_t>(r)]);
      for (int k = 0; k < layout.groups; ++k)
        g.row(r).segment(k * gs, gs).array() +=
            self.grad(static_cast<Eigen::Index>(s), k) / Real(counts[s]);
    }
  });
}

// Biased variance per (segment, group) around the supplied mean.
template <typename Real>
Value<Real> row_group_var(const Value<Real>& x, const Value<Real>& mean, const GroupLayout& layout) {
  layout.validate(x);
  if (mean.rows() != layout.num_segments || mean.cols() != layout.groups)
    throw ShapeError("row_group_var: mean must be segments x groups");
  const Eigen::Index gs = x.cols() / layout.groups;
  const auto counts = layout.counts(x.cols());
  Matrix<Real> out = Matrix<Real>::Zero(layout.num_segments, layout.groups);
  const auto& seg = *layout.segment;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto s = seg[static_cast<std::size_t>(r)];
    for (int g = 0; g < layout.groups; ++g)
      out(s, g) += (x.data().row(r).segment(g * gs, gs).array() - mean.data()(s, g)).square().sum();
  }
  for (int s = 0; s < layout.num_segments; ++s)
    if (counts[static_cast<std::size_t>(s)] > 0) out.row(s) /= Real(counts[static_cast<std::size_t>(s)]);
  return detail::tape_of(x).record(
      std::move(out), {x, mean}, [x, mean, layout, gs, counts](Node<Real>& self) {
        const auto& seg = *layout.segment;
        Matrix<Real> dmean = Matrix<Real>::Zero(layout.num_segments, layout.groups);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          const auto s = static_cast<std::size_t>(seg[static_cast<std::size_t>(r)]);
          for (int k = 0; k < layout.groups; ++k) {
            const Real coef = Real(2) * self.grad(static_cast<Eigen::Index>(s), k) / Real(counts[s]);
            auto centered = x.data().row(r).segment(k * gs, gs).array() -
                            mean.data()(static_cast<Eigen::Index>(s), k);
            if (x.requires_grad()) x.node()->grad_ref().row(r).segment(k * gs, gs).array() += coef * centered;
            dmean(static_cast<Eigen::Index>(s), k) -= coef * centered.sum();
          }
        }
        detail::accumulate(mean, dmean);
      });
}

// (x - mean) / sqrt(var + eps) with statistics broadcast per (segment, group).
template <typename Real>
Value<Real> normalize(const Value<Real>& x, const Value<Real>& mean, const Value<Real>& var,
                      const GroupLayout& layout, Real eps) {
  layout.validate(x);
  if (mean.rows() != layout.num_segments || mean.cols() != layout.groups ||
      var.rows() != layout.num_segments || var.cols() != layout.groups)
    throw ShapeError("normalize: statistics must be segments x groups");
  const Eigen::Index gs = x.cols() / layout.groups;
  Matrix<Real> inv = (var.data().array() + eps).rsqrt().matrix();
  Matrix<Real> out(x.rows(), x.cols());
  const auto& seg = *layout.segment;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto s = seg[static_cast<std::size_t>(r)];
    for (int g = 0; g < layout.groups; ++g)
      out.row(r).segment(g * gs, gs) =
          (x.data().row(r).segment(g * gs, gs).array() - mean.data()(s, g)) * inv(s, g);
  }
  return detail::tape_of(x).record(
      std::move(out), {x, mean, var}, [x, mean, var, layout, gs, inv](Node<Real>& self) {
        const auto& seg = *layout.segment;
        Matrix<Real> dmean = Matrix<Real>::Zero(layout.num_segments, layout.groups);
        Matrix<Real> dvar = Matrix<Real>::Zero(layout.num_segments, layout.groups);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          const auto s = seg[static_cast<std::size_t>(r)];
          for (int k = 0; k < layout.groups; ++k) {
            const Real is = inv(s, k);
            auto gy = self.grad.row(r).segment(k * gs, gs).array();
            if (x.requires_grad()) x.node()->grad_ref().row(r).segment(k * gs, gs).array() += gy * is;
            dmean(s, k) -= gy.sum() * is;
            auto centered = x.data().row(r).segment(k * gs, gs).array() - mean.data()(s, k);
            dvar(s, k) += (gy * centered).sum() * Real(-0.5) * is * is * is;
          }
        }
        detail::accumulate(mean, dmean);
        detail::accumulate(var, dvar);
      });
}

// Mean two-class cross-entropy of logits (N x 2) against 0/1 labels. Returns 1x1.
template <typename Real>
Value<Real> softmax_cross_entropy(const Value<Real>& logits, std::span<const std::uint8_t> labels) {
  if (logits.cols() != 2 || static_cast<std::size_t>(logits.rows()) != labels.size())
    throw ShapeError("softmax_cross_entropy: logits must be N x 2 with N labels");
  const Eigen::Index n = logits.rows();
  auto lab = std::make_shared<const std::vector<std::uint8_t>>(labels.begin(), labels.end());
  Matrix<Real> out = Matrix<Real>::Zero(1, 1);
  Real total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real z0 = logits.data()(i, 0), z1 = logits.data()(i, 1);
    const Real m = std::max(z0, z1);
    const Real zl = (*lab)[static_cast<std::size_t>(i)] ? z1 : z0;
    total += (m - zl) + std::log1p(std::exp(-std::abs(z0 - z1)));
  }
  if (n > 0) out(0, 0) = total / Real(n);
  return detail::tape_of(logits).record(std::move(out), {logits}, [logits, lab, n](Node<Real>& self) {
    if (!logits.requires_grad() || n == 0) return;
    auto& g = logits.node()->grad_ref();
    const Real up = self.grad(0, 0) / Real(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Real z0 = logits.data()(i, 0), z1 = logits.data()(i, 1);
      // p1 = sigmoid(z1 - z0), computed stably.
      const Real d = z1 - z0;
      const Real p1 = d >= 0 ? Real(1) / (Real(1) + std::exp(-d)) : std::exp(d) / (Real(1) + std::exp(d));
      const Real y = (*lab)[static_cast<std::size_t>(i)] ? Real(1) : Real(0);
      g(i, 0) += up * ((Real(1) - p1) - (Real(1) - y));
      g(i, 1) += up * (p1 - y);
    }
  });
}

// Mean of squared differences over all elements. Returns 1x1.
template <typename Real>
Value<Real> mse(const Value<Real>& a, const Value<Real>& b) {
  detail::require_same_shape(a, b, "mse");
  const Eigen::Index n = a.data().size();
  Matrix<Real> out = Matrix<Real>::Zero(1, 1);
  if (n > 0) out(0, 0) = (a.data() - b.data()).squaredNorm() / Real(n);
  return detail::tape_of(a).record(std::move(out), {a, b}, [a, b, n](Node<Real>& self) {
    if (n == 0) return;
    const Matrix<Real> diff = (a.data() - b.data()) * (Real(2) * self.grad(0, 0) / Real(n));
    detail::accumulate(a, diff);
    if (b.requires_grad()) b.node()->grad_ref() -= diff;
  });
}

template <typename Real>
Value<Real> concat_cols(const Value<Real>& a, const Value<Real>& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix<Real> out(a.rows(), a.cols() + b.cols());
  out << a.data(), b.data();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return detail::tape_of(a).record(std::move(out), {a, b}, [a, b, ca, cb](Node<Real>& self) {
    if (a.requires_grad()) a.node()->grad_ref() += self.grad.leftCols(ca);
    if (b.requires_grad()) b.node()->grad_ref() += self.grad.rightCols(cb);
  });
}

template <typename Real>
Value<Real> slice_cols(const Value<Real>& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Matrix<Real> out = a.data().middleCols(begin, count);
  return detail::tape_of(a).record(std::move(out), {a}, [a, begin, count](Node<Real>& self) {
    if (a.requires_grad()) a.node()->grad_ref().middleCols(begin, count) += self.grad;
  });
}

// Copy of the data with no gradient path.
template <typename Real>
Value<Real> detach(const Value<Real>& a) {
  return detail::tape_of(a).constant(a.data());
}

// ---------------------------------------------------------------------------
// Generic dispatch over the primitive set.

enum class Primitive {
  kMatmul,
  kAdd,
  kAddRow,
  kMulRow,
  kScale,
  kRelu,
  kSum,
  kGatherRows,
  kScatterAddRows,
  kRowGroupMean,
  kRowGroupVar,
  kNormalize,
  kSoftmaxCrossEntropy,
  kMse,
  kConcatCols,
  kSliceCols,
};

struct PrimitiveAux {
  double scalar = 0.0;
  IndexTable index;
  Eigen::Index out_rows = 0;
  GroupLayout layout;
  std::vector<std::uint8_t> labels;
  Eigen::Index begin = 0;
  Eigen::Index count = 0;
};

template <typename Real>
Value<Real> apply_primitive(Primitive op, std::span<const Value<Real>> in, const PrimitiveAux& aux = {}) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) throw ShapeError("primitive expects " + std::to_string(n) + " inputs");
  };
  switch (op) {
    case Primitive::kMatmul: need(2); return matmul(in[0], in[1]);
    case Primitive::kAdd: need(2); return add(in[0], in[1]);
    case Primitive::kAddRow: need(2); return add_row(in[0], in[1]);
    case Primitive::kMulRow: need(2); return mul_row(in[0], in[1]);
    case Primitive::kScale: need(1); return scale(in[0], static_cast<Real>(aux.scalar));
    case Primitive::kRelu: need(1); return relu(in[0]);
    case Primitive::kSum: need(1); return sum(in[0]);
    case Primitive::kGatherRows: need(1); return gather_rows(in[0], aux.index);
    case Primitive::kScatterAddRows: need(1); return scatter_add_rows(in[0], aux.index, aux.out_rows);
    case Primitive::kRowGroupMean: need(1); return row_group_mean(in[0], aux.layout);
    case Primitive::kRowGroupVar: need(2); return row_group_var(in[0], in[1], aux.layout);
    case Primitive::kNormalize:
      need(3);
      return normalize(in[0], in[1], in[2], aux.layout, static_cast<Real>(aux.scalar));
    case Primitive::kSoftmaxCrossEntropy: need(1); return softmax_cross_entropy(in[0], std::span(aux.labels));
    case Primitive::kMse: need(2); return mse(in[0], in[1]);
    case Primitive::kConcatCols: need(2); return concat_cols(in[0], in[1]);
    case Primitive::kSliceCols: need(1); return slice_cols(in[0], aux.begin, aux.count);
  }
  throw ConfigError("unknown primitive id " + std::to_string(static_cast<int>(op)));
}

}  // namespace ounet::ad
