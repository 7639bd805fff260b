#include <algorithm>
#include <cmath>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"

namespace lmac {

using detail::grad_buffer;
using detail::make_result;

namespace {

struct Geometry {
  std::int64_t channels, in_h, in_w, kh, kw, stride, pad, out_h, out_w;
  std::int64_t col_rows() const { return channels * kh * kw; }
  std::int64_t col_cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* x, const Geometry& g, T* col) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.in_h) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.in_h + ih) * g.in_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.in_w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const Geometry& g, T* x) {
  const std::int64_t cols = g.col_cols();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.in_h) continue;
          T* dst = x + (c * g.in_h + ih) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.in_w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// A 1x1, stride-1, unpadded kernel needs no unfolding.
bool is_pointwise(const Geometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

void check_conv_args(const Shape& x, const Shape& w, ConvOptions opt, std::string_view op) {
  if (x.size() != 4 || w.size() != 4) {
    throw ShapeError(std::string(op) + " expects 4-D input and weight, got " + shape_str(x) + ", " +
                     shape_str(w));
  }
  if (opt.stride < 1 || opt.padding < 0) {
    throw ShapeError(std::string(op) + ": stride must be >= 1 and padding >= 0");
  }
}

template <typename T>
void add_channel_bias(std::vector<T>& out, const BasicTensor<T>& bias, std::int64_t batch,
                      std::int64_t channels, std::int64_t plane) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError("bias shape " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(channels) + " channels");
  }
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < channels; ++c) {
      T* p = out.data() + (b * channels + c) * plane;
      const T v = bias.data()[c];
      for (std::int64_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
}

template <typename T>
void accumulate_bias_grad(detail::TensorImpl<T>* bias, std::span<const T> g, std::int64_t batch,
                          std::int64_t channels, std::int64_t plane) {
  if (bias == nullptr || !bias->requires_grad) return;
  auto gb = grad_buffer(*bias);
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* p = g.data() + (b * channels + c) * plane;
      T s = 0;
      for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      gb[c] += s;
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias,
                      ConvOptions opt) {
  check_conv_args(x.shape(), w.shape(), opt, "conv2d");
  const std::int64_t batch = x.dim(0), out_ch = w.dim(0);
  Geometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), opt.stride, opt.padding, 0, 0};
  if (w.dim(1) != g.channels) {
    throw ShapeError("conv2d: input has " + std::to_string(g.channels) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (g.in_h + 2 * g.pad < g.kh || g.in_w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not fit padded input " +
                     shape_str(x.shape()));
  }
  g.out_h = (g.in_h + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.kw) / g.stride + 1;

  const std::int64_t rows = g.col_rows(), cols = g.col_cols();
  const std::int64_t in_plane = g.channels * g.in_h * g.in_w;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows * cols));
  std::vector<T> out(static_cast<std::size_t>(batch * out_ch * cols));
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* xb = x.data().data() + b * in_plane;
    const T* cb = xb;
    if (!pointwise) {
      im2col(xb, g, col.data());
      cb = col.data();
    }
    gemm<T>(false, false, out_ch, cols, rows, T(1), w.data().data(), cb, T(0),
            out.data() + b * out_ch * cols);
  }
  add_channel_bias(out, bias, batch, out_ch, cols);

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result<T>(
      Shape{batch, out_ch, g.out_h, g.out_w}, std::move(out), "conv2d", {&x, &w, &bias},
      [xi, wi, bi, g, batch, out_ch, rows, cols, in_plane, pointwise](std::span<const T> grad) {
        std::vector<T> col(static_cast<std::size_t>(rows * cols));
        for (std::int64_t b = 0; b < batch; ++b) {
          const T* gb = grad.data() + b * out_ch * cols;
          if (wi->requires_grad) {
            const T* xb = xi->data.data() + b * in_plane;
            const T* cb = xb;
            if (!pointwise) {
              im2col(xb, g, col.data());
              cb = col.data();
            }
            gemm<T>(false, true, out_ch, rows, cols, T(1), gb, cb, T(1),
                    grad_buffer(*wi).data());
          }
          if (xi->requires_grad) {
            T* gx = grad_buffer(*xi).data() + b * in_plane;
            if (pointwise) {
              gemm<T>(true, false, rows, cols, out_ch, T(1), wi->data.data(), gb, T(1), gx);
            } else {
              gemm<T>(true, false, rows, cols, out_ch, T(1), wi->data.data(), gb, T(0),
                      col.data());
              col2im_add(col.data(), g, gx);
            }
          }
        }
        accumulate_bias_grad<T>(bi.get(), grad, batch, out_ch, cols);
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& bias, ConvOptions opt) {
  check_conv_args(x.shape(), w.shape(), opt, "conv_transpose2d");
  const std::int64_t batch = x.dim(0), in_ch = x.dim(1);
  if (w.dim(0) != in_ch) {
    throw ShapeError("conv_transpose2d: input has " + std::to_string(in_ch) +
                     " channels, weight expects " + std::to_string(w.dim(0)));
  }
  const std::int64_t out_ch = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t h = x.dim(2), wd = x.dim(3);
  const std::int64_t out_h = (h - 1) * opt.stride - 2 * opt.padding + kh;
  const std::int64_t out_w = (wd - 1) * opt.stride - 2 * opt.padding + kw;
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("conv_transpose2d: invalid output size for input " + shape_str(x.shape()));
  }
  // Geometry of the conv2d this op is the adjoint of: output plane is the
  // transposed op's input plane.
  Geometry g{out_ch, out_h, out_w, kh, kw, opt.stride, opt.padding, h, wd};
  const std::int64_t rows = g.col_rows(), cols = g.col_cols();
  const std::int64_t out_plane = out_ch * out_h * out_w;
  const bool pointwise = is_pointwise(g);

  std::vector<T> out(static_cast<std::size_t>(batch * out_plane), T(0));
  std::vector<T> col(static_cast<std::size_t>(rows * cols));
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* xb = x.data().data() + b * in_ch * cols;
    if (pointwise) {
      gemm<T>(true, false, rows, cols, in_ch, T(1), w.data().data(), xb, T(0),
              out.data() + b * out_plane);
    } else {
      gemm<T>(true, false, rows, cols, in_ch, T(1), w.data().data(), xb, T(0), col.data());
      col2im_add(col.data(), g, out.data() + b * out_plane);
    }
  }
  add_channel_bias(out, bias, batch, out_ch, out_h * out_w);

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result<T>(
      Shape{batch, out_ch, out_h, out_w}, std::move(out), "conv_transpose2d", {&x, &w, &bias},
      [xi, wi, bi, g, batch, in_ch, out_ch, rows, cols, out_plane,
       pointwise](std::span<const T> grad) {
        std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows * cols));
        for (std::int64_t b = 0; b < batch; ++b) {
          const T* gb = grad.data() + b * out_plane;
          const T* cb = gb;
          if (!pointwise) {
            im2col(gb, g, col.data());
            cb = col.data();
          }
          if (xi->requires_grad) {
            gemm<T>(false, false, in_ch, cols, rows, T(1), wi->data.data(), cb, T(1),
                    grad_buffer(*xi).data() + b * in_ch * cols);
          }
          if (wi->requires_grad) {
            gemm<T>(false, true, in_ch, rows, cols, T(1), xi->data.data() + b * in_ch * cols, cb,
                    T(1), grad_buffer(*wi).data());
          }
        }
        accumulate_bias_grad<T>(bi.get(), grad, batch, out_ch, g.in_h * g.in_w);
      });
}

template <typename T>
BasicTensor<T> pool2d(PoolKind kind, const BasicTensor<T>& x, PoolWindow win) {
  if (x.rank() != 4) throw ShapeError("pool2d expects [B,C,H,W], got " + shape_str(x.shape()));
  if (win.kernel_h < 1 || win.kernel_w < 1 || win.stride_h < 1 || win.stride_w < 1) {
    throw ShapeError("pool2d: kernel and stride must be positive");
  }
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (win.kernel_h > h || win.kernel_w > w) {
    throw ShapeError("pool2d: window larger than input " + shape_str(x.shape()));
  }
  const std::int64_t oh = (h - win.kernel_h) / win.stride_h + 1;
  const std::int64_t ow = (w - win.kernel_w) / win.stride_w + 1;
  auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  std::vector<std::int64_t> argmax(kind == PoolKind::max ? out.size() : 0);
  const T inv = T(1) / static_cast<T>(win.kernel_h * win.kernel_w);
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        const std::int64_t o = (p * oh + i) * ow + j;
        T best = 0;
        std::int64_t best_idx = -1;
        T acc = 0;
        for (int di = 0; di < win.kernel_h; ++di) {
          for (int dj = 0; dj < win.kernel_w; ++dj) {
            const std::int64_t idx = (p * h + i * win.stride_h + di) * w + j * win.stride_w + dj;
            const T v = xd[idx];
            acc += v;
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        }
        if (kind == PoolKind::max) {
          out[o] = best;
          argmax[o] = best_idx;
        } else {
          out[o] = acc * inv;
        }
      }
    }
  }
  auto xi = x.impl();
  return make_result<T>(
      Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), kind == PoolKind::max ? "maxpool2d" : "avgpool2d",
      {&x}, [xi, kind, argmax = std::move(argmax), planes, h, w, oh, ow, win, inv](std::span<const T> g) {
        auto gx = grad_buffer(*xi);
        if (kind == PoolKind::max) {
          for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
          return;
        }
        for (std::int64_t p = 0; p < planes; ++p) {
          for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j) {
              const T v = g[(p * oh + i) * ow + j] * inv;
              for (int di = 0; di < win.kernel_h; ++di) {
                for (int dj = 0; dj < win.kernel_w; ++dj) {
                  gx[(p * h + i * win.stride_h + di) * w + j * win.stride_w + dj] += v;
                }
              }
            }
          }
        }
      });
}

namespace {

struct LerpTable {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

LerpTable lerp_table(std::int64_t in, std::int64_t out) {
  LerpTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() != 4) throw ShapeError("resize_bilinear expects [B,C,H,W], got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: output size must be positive");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  auto ty = lerp_table(h, out_h);
  auto tx = lerp_table(w, out_w);
  auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(planes * out_h * out_w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xd.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ty.frac[i]);
      const T* r0 = src + ty.lo[i] * w;
      const T* r1 = src + ty.hi[i] * w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(tx.frac[j]);
        const T top = r0[tx.lo[j]] * (T(1) - fx) + r0[tx.hi[j]] * fx;
        const T bot = r1[tx.lo[j]] * (T(1) - fx) + r1[tx.hi[j]] * fx;
        dst[i * out_w + j] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  auto xi = x.impl();
  return make_result<T>(
      Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "resize_bilinear", {&x},
      [xi, ty = std::move(ty), tx = std::move(tx), planes, h, w, out_h, out_w](std::span<const T> g) {
        auto gx = grad_buffer(*xi);
        for (std::int64_t p = 0; p < planes; ++p) {
          T* dst = gx.data() + p * h * w;
          const T* src = g.data() + p * out_h * out_w;
          for (std::int64_t i = 0; i < out_h; ++i) {
            const T fy = static_cast<T>(ty.frac[i]);
            T* r0 = dst + ty.lo[i] * w;
            T* r1 = dst + ty.hi[i] * w;
            for (std::int64_t j = 0; j < out_w; ++j) {
              const T fx = static_cast<T>(tx.frac[j]);
              const T v = src[i * out_w + j];
              r0[tx.lo[j]] += v * (T(1) - fy) * (T(1) - fx);
              r0[tx.hi[j]] += v * (T(1) - fy) * fx;
              r1[tx.lo[j]] += v * fy * (T(1) - fx);
              r1[tx.hi[j]] += v * fy * fx;
            }
          }
        }
      });
}

#define LMAC_INSTANTIATE(T)                                                                       \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                 const BasicTensor<T>&, ConvOptions);                             \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                           const BasicTensor<T>&, ConvOptions);                   \
  template BasicTensor<T> pool2d(PoolKind, const BasicTensor<T>&, PoolWindow);                    \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, std::int64_t, std::int64_t);

LMAC_INSTANTIATE(float)
LMAC_INSTANTIATE(double)
#undef LMAC_INSTANTIATE

}  // namespace lmac
