#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lmac {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicTensor;

namespace detail {

template <typename T>
struct TensorImpl;

// One recorded operation. `backward` receives the gradient of the node's
// output and accumulates into the gradients of `inputs`.
template <typename T>
struct Node {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool retains_grad = false;
  std::shared_ptr<Node<T>> grad_fn;
};

// Adds `g` into the gradient buffer of `impl`, allocating it on first use.
template <typename T>
void accumulate_grad(TensorImpl<T>& impl, std::span<const T> g);

// Returns the gradient buffer of `impl`, allocated and zero-filled if absent.
template <typename T>
std::span<T> grad_buffer(TensorImpl<T>& impl);

}  // namespace detail

bool grad_enabled();

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major n-dimensional array with optional reverse-mode gradient.
///
/// Copies share storage and graph position (handle semantics, like the
/// tensors of mainstream frameworks). Use `detach()` for an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const T> data() const;
  /// Writable view of the values. Intended for leaves (parameters, inputs);
  /// mutating a tensor that a live graph saved invalidates that graph.
  std::span<T> mutable_data();
  T item() const;
  T at(std::int64_t flat_index) const { return data()[static_cast<std::size_t>(flat_index)]; }

  bool requires_grad() const;
  BasicTensor& set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();
  /// Keep this non-leaf tensor's gradient after `backward()`.
  void retain_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls until `zero_grad()`.
  void backward() const;

  BasicTensor detach() const;
  template <typename U>
  BasicTensor<U> cast() const;

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }
  static BasicTensor from_impl(std::shared_ptr<detail::TensorImpl<T>> impl);

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
template <typename U>
BasicTensor<U> BasicTensor<T>::cast() const {
  std::vector<U> out(data().begin(), data().end());
  return BasicTensor<U>(shape(), std::move(out));
}

namespace detail {

// Builds the result of an operation: checks finiteness and, when recording
// is on and any input requires a gradient, attaches a graph node.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           std::function<void(std::span<const T>)> backward);

// Same as above for a runtime-sized input list.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           const std::vector<BasicTensor<T>>& inputs,
                           std::function<void(std::span<const T>)> backward);

template <typename T>
void check_finite(std::span<const T> values, std::string_view op);

}  // namespace detail

}  // namespace lmac
