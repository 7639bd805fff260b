#pragma once

#include <span>
#include <vector>

#include "lmac/tensor.hpp"

namespace lmac {

// Elementwise ------------------------------------------------------------

enum class Elementwise { add, sub, mul, scale, relu, sigmoid, log, exp, abs };

/// Binary ops require equal shapes or one operand with a single element.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
/// a + offset
template <typename T>
BasicTensor<T> shift(const BasicTensor<T>& a, T offset);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& a);

/// Dispatcher over `Elementwise`. `b` is the second operand for add/sub/mul
/// and a single-element factor for scale; unary kinds ignore it.
template <typename T>
BasicTensor<T> elementwise(Elementwise kind, const BasicTensor<T>& a,
                           const BasicTensor<T>& b = {});

// Reductions and reshaping ----------------------------------------------

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);
/// [B, C, H, W] -> [B, C], mean over the spatial axes.
template <typename T>
BasicTensor<T> mean_spatial(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);
/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& items);
/// Copy of x[index] along the leading axis, outside the graph.
template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, std::int64_t index);

// Linear algebra ----------------------------------------------------------

/// a[m,k] x b[k,n] -> [m,n]; a[m,k] x b[B,k,n] -> [B,m,n] (a shared across batch).
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// x[B,k] w[k,n] + bias[n]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias);

// Spatial -----------------------------------------------------------------

struct ConvOptions {
  int stride = 1;
  int padding = 0;
};

/// Cross-correlation. x[B,C,H,W], w[O,C,kH,kW], optional bias[O].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& bias = {}, ConvOptions opt = {});

/// Adjoint of conv2d in x. x[B,O,H,W], w[O,C,kH,kW] (same layout as the
/// matching conv2d), optional bias[C]. Output spatial size (H-1)*s - 2p + kH.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& bias = {}, ConvOptions opt = {});

enum class PoolKind { max, avg };

struct PoolWindow {
  int kernel_h = 2;
  int kernel_w = 2;
  int stride_h = 2;
  int stride_w = 2;
};

/// Max-pool ties resolve to the first index in row-major window order.
template <typename T>
BasicTensor<T> pool2d(PoolKind kind, const BasicTensor<T>& x, PoolWindow window);

/// Bilinear resampling of [B,C,H,W] to [B,C,out_h,out_w] with half-pixel
/// centers (align_corners = false).
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w);

// Classification losses ---------------------------------------------------

/// Row-wise log-softmax of [B,C] with max subtraction.
template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x);
/// out[b] = x[b, index[b]] for x[B,C].
template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const int> index);
/// Mean over the batch of -logp[b, target[b]].
template <typename T>
BasicTensor<T> nll_loss(const BasicTensor<T>& logp, std::span<const int> target);

// Raw kernels shared with non-differentiable code ------------------------

/// Row-major C[MxN] = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

}  // namespace lmac
