#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cvgeo/error.hpp"

namespace cvgeo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Accumulator type used by every reduction, regardless of storage type.
using Accum = double;

/// Dense row-major tensor with an optional gradient buffer.
///
/// Copies are handles that alias the same storage (the tape records handles
/// and accumulates gradients through them). Use clone() for a deep copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0))
      : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->data.assign(shape_numel(s_->shape), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : s_(std::make_shared<Storage>()) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, std::vector<T>{v}); }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t dim() const { return s_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T& operator[](std::size_t i) { return s_->data[i]; }
  const T& operator[](std::size_t i) const { return s_->data[i]; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return s_->data[0];
  }

  bool requires_grad() const noexcept { return s_ && s_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true) {
    s_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }
  /// Allocates a zero gradient buffer on first use. Const because the
  /// gradient belongs to the shared storage, not to this handle.
  std::span<T> grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
  }
  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }
  void drop_grad() { s_->grad.clear(); }

  BasicTensor clone() const {
    BasicTensor out(shape(), std::vector<T>(s_->data));
    out.s_->requires_grad = s_->requires_grad;
    return out;
  }

  bool same_storage(const BasicTensor& other) const noexcept { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Reverse-mode tape. Ops append a closure that reads the output gradient
/// and accumulates into the inputs that require it; backward() replays the
/// closures in reverse order.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  void backward(BasicTensor<T>& loss) {
    if (loss.numel() != 1) {
      throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    }
    loss.grad()[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  std::size_t size() const noexcept { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

/// Output of an op: requires grad iff a tape is recording and some input does.
template <typename T>
bool tracks(const Tape<T>* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* in : inputs) {
    if (in != nullptr && in->requires_grad()) return true;
  }
  return false;
}

}  // namespace cvgeo
