#include "lmac/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "lmac/error.hpp"

namespace lmac {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

template <typename T>
void accumulate_grad(TensorImpl<T>& impl, std::span<const T> g) {
  auto buf = grad_buffer(impl);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <typename T>
std::span<T> grad_buffer(TensorImpl<T>& impl) {
  if (impl.grad.size() != impl.data.size()) impl.grad.assign(impl.data.size(), T(0));
  return impl.grad;
}

template <typename T>
void check_finite(std::span<const T> values, std::string_view op) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
}

template <typename T>
static BasicTensor<T> make_result_impl(Shape shape, std::vector<T> data, std::string_view op,
                                       const std::vector<const BasicTensor<T>*>& inputs,
                                       std::function<void(std::span<const T>)> backward) {
  check_finite<T>(data, op);
  BasicTensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || (in->defined() && in->requires_grad());
  if (!any) return out;
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  for (const auto* in : inputs) {
    if (in->defined() && in->requires_grad()) node->inputs.push_back(in->impl());
  }
  node->backward = std::move(backward);
  out.impl()->grad_fn = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           std::function<void(std::span<const T>)> backward) {
  return make_result_impl<T>(std::move(shape), std::move(data), op,
                             std::vector<const BasicTensor<T>*>(inputs), std::move(backward));
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                           const std::vector<BasicTensor<T>>& inputs,
                           std::function<void(std::span<const T>)> backward) {
  std::vector<const BasicTensor<T>*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& t : inputs) ptrs.push_back(&t);
  return make_result_impl<T>(std::move(shape), std::move(data), op, ptrs, std::move(backward));
}

}  // namespace detail

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
  impl_ = std::make_shared<detail::TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value),
                     requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{}, std::vector<T>{value});
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  return impl_->shape;
}

template <typename T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
std::int64_t BasicTensor<T>::numel() const {
  return static_cast<std::int64_t>(impl_->data.size());
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  return impl_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  return impl_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return impl_->requires_grad;
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool value) {
  if (!is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = value;
  return *this;
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  return impl_->grad_fn == nullptr;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return !impl_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  return impl_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  impl_->grad.clear();
}

template <typename T>
void BasicTensor<T>::retain_grad() {
  impl_->retains_grad = true;
}

template <typename T>
void BasicTensor<T>::backward() const {
  using Impl = detail::TensorImpl<T>;
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) throw Error("backward() on a tensor that does not require grad");

  // Post-order DFS: every node appears after all of its inputs.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn != nullptr && next < fn->inputs.size()) {
      Impl* child = fn->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Impl* n : order) {
    if (n->grad_fn) n->grad.assign(n->data.size(), T(0));
  }
  detail::grad_buffer(*impl_)[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* n = *it;
    if (!n->grad_fn) continue;
    n->grad_fn->backward(std::span<const T>(n->grad));
    for (const auto& in : n->grad_fn->inputs) {
      detail::check_finite<T>(in->grad, n->grad_fn->op);
    }
  }

  for (Impl* n : order) {
    if (n->grad_fn && !n->retains_grad) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(impl_->shape, impl_->data);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_impl(std::shared_ptr<detail::TensorImpl<T>> impl) {
  BasicTensor t;
  t.impl_ = std::move(impl);
  return t;
}

#define LMAC_INSTANTIATE(T)                                                                        \
  template class BasicTensor<T>;                                                                   \
  template void detail::accumulate_grad<T>(detail::TensorImpl<T>&, std::span<const T>);            \
  template std::span<T> detail::grad_buffer<T>(detail::TensorImpl<T>&);                            \
  template void detail::check_finite<T>(std::span<const T>, std::string_view);                     \
  template BasicTensor<T> detail::make_result<T>(Shape, std::vector<T>, std::string_view,          \
                                                 std::initializer_list<const BasicTensor<T>*>,     \
                                                 std::function<void(std::span<const T>)>);         \
  template BasicTensor<T> detail::make_result<T>(Shape, std::vector<T>, std::string_view,          \
                                                 const std::vector<BasicTensor<T>>&,               \
                                                 std::function<void(std::span<const T>)>);

LMAC_INSTANTIATE(float)
LMAC_INSTANTIATE(double)
#undef LMAC_INSTANTIATE

}  // namespace lmac
