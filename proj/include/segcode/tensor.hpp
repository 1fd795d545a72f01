#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "segcode/errors.hpp"

namespace segcode {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) {
    if (e < 1) throw DimensionError("tensor extent must be >= 1, got shape " + shape_str(s));
    n *= e;
  }
  return n;
}

namespace detail {

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major tensor of reals. A Tensor is a cheap shared handle: copies
/// alias the same storage, which is what lets recorded backward rules find the
/// gradients of the tensors that produced an op's output. Values are treated
/// as immutable once an op has consumed them; gradients accumulate in place.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode<S>>();
    Index n = shape_numel(shape);
    t.node_->shape = std::move(shape);
    t.node_->value.assign(static_cast<std::size_t>(n), S(0));
    return t;
  }

  static Tensor full(Shape shape, S v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.node_->value) x = v;
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<S> values) {
    Index n = shape_numel(shape);
    if (n != static_cast<Index>(values.size()))
      throw DimensionError("value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    return t;
  }

  static Tensor scalar(S v) { return from_values({1}, {v}); }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return static_cast<Index>(node_->value.size()); }

  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  S item() const {
    if (numel() != 1) throw DimensionError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  S& at(std::initializer_list<Index> idx) { return node_->value[static_cast<std::size_t>(offset(idx))]; }
  S at(std::initializer_list<Index> idx) const { return node_->value[static_cast<std::size_t>(offset(idx))]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return node_ && !node_->grad.empty(); }

  /// Gradient storage, allocated zero-filled on first touch.
  std::vector<S>& grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
    return node_->grad;
  }
  const std::vector<S>& grad_view() const { return node_->grad; }
  S* grad_data() { return grad().data(); }

  void zero_grad() {
    if (node_ && !node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
  }

  // Eigen views over the flat storage.
  Eigen::Map<RowMat<S>> mat(Index rows, Index cols) {
    return Eigen::Map<RowMat<S>>(data(), rows, cols);
  }
  Eigen::Map<const RowMat<S>> mat(Index rows, Index cols) const {
    return Eigen::Map<const RowMat<S>>(data(), rows, cols);
  }
  Eigen::Map<RowMat<S>> grad_mat(Index rows, Index cols) {
    return Eigen::Map<RowMat<S>>(grad_data(), rows, cols);
  }
  Eigen::Map<ArrX<S>> arr() { return Eigen::Map<ArrX<S>>(data(), numel()); }
  Eigen::Map<const ArrX<S>> arr() const { return Eigen::Map<const ArrX<S>>(data(), numel()); }
  Eigen::Map<ArrX<S>> grad_arr() { return Eigen::Map<ArrX<S>>(grad_data(), numel()); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  Index offset(std::initializer_list<Index> idx) const {
    const Shape& sh = node_->shape;
    if (idx.size() != sh.size())
      throw DimensionError("index rank " + std::to_string(idx.size()) + " vs shape " + shape_str(sh));
    Index off = 0;
    std::size_t d = 0;
    for (Index i : idx) {
      off = off * sh[d] + i;
      ++d;
    }
    return off;
  }

  std::shared_ptr<detail::TensorNode<S>> node_;
};

/// Records the backward rule of every differentiable op executed while the
/// tape is active on the current thread. Ops are appended in execution order,
/// so a reverse sweep is a valid topological traversal; each recorded rule
/// runs exactly once per backward call. A tape belongs to one thread; batch
/// parallelism must use independent tapes.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

  void record(std::function<void()> backward_rule) { steps_.push_back(std::move(backward_rule)); }

  std::size_t size() const { return steps_.size(); }

  void clear() { steps_.clear(); }

  /// Seeds d(loss)/d(loss) = seed and replays all recorded rules in reverse.
  /// Calling twice without clearing accumulates, per the accumulation contract.
  void backward(Tensor<S> loss, S seed = S(1)) {
    if (loss.numel() != 1)
      throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    loss.grad_data()[0] += seed;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
};

/// RAII activation of a tape on the current thread.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(Tape<S>::active()) { Tape<S>::active() = &tape; }
  ~TapeScope() { Tape<S>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

/// Backward through the tape active on this thread.
template <typename S>
void backward(const Tensor<S>& loss, S seed = S(1)) {
  Tape<S>* t = Tape<S>::active();
  if (!t) throw DimensionError("backward: no active tape on this thread");
  t->backward(loss, seed);
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace segcode
