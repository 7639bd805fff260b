#include "lmac/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmac/error.hpp"

namespace lmac {

using detail::accumulate_grad;
using detail::grad_buffer;
using detail::make_result;

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  // Stored shapes: A is m x k (or k x m when transposed), likewise B.
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k) * CMap(b, k, n));
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, k, m).transpose() * CMap(b, k, n));
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k) * CMap(b, n, k).transpose());
  } else {
    cm.noalias() += alpha * (CMap(a, k, m).transpose() * CMap(b, n, k).transpose());
  }
}

namespace {

template <typename T>
bool is_single(const BasicTensor<T>& t) {
  return t.numel() == 1;
}

// Shape of a broadcasting binary op, or throws.
template <typename T>
Shape binary_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, std::string_view op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined operand");
  if (a.shape() == b.shape()) return a.shape();
  if (is_single(b)) return a.shape();
  if (is_single(a)) return b.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

// Generic broadcasting binary op. `f(x, y)` is the value; `dfa(x, y)` and
// `dfb(x, y)` are the partials with respect to each operand.
template <typename T, typename F, typename DA, typename DB>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, std::string_view op, F f,
                      DA dfa, DB dfb) {
  Shape shape = binary_shape(a, b, op);
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  const bool a1 = a.numel() == 1 && n != 1;
  const bool b1 = b.numel() == 1 && n != 1;
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[a1 ? 0 : i], bd[b1 ? 0 : i]);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>(std::move(shape), std::move(out), op, {&a, &b},
                        [ai, bi, a1, b1, n, dfa, dfb](std::span<const T> g) {
                          const auto& av = ai->data;
                          const auto& bv = bi->data;
                          if (ai->requires_grad) {
                            auto ga = grad_buffer(*ai);
                            for (std::size_t i = 0; i < n; ++i) {
                              ga[a1 ? 0 : i] += g[i] * dfa(av[a1 ? 0 : i], bv[b1 ? 0 : i]);
                            }
                          }
                          if (bi->requires_grad) {
                            auto gb = grad_buffer(*bi);
                            for (std::size_t i = 0; i < n; ++i) {
                              gb[b1 ? 0 : i] += g[i] * dfb(av[a1 ? 0 : i], bv[b1 ? 0 : i]);
                            }
                          }
                        });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename T, typename F, typename D>
BasicTensor<T> unary(const BasicTensor<T>& a, std::string_view op, F f, D dfdx,
                     bool keep_output) {
  auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
  auto ai = a.impl();
  std::vector<T> saved;
  if (keep_output && a.requires_grad() && grad_enabled()) saved = out;
  return make_result<T>(a.shape(), std::move(out), op, {&a},
                        [ai, dfdx, saved = std::move(saved)](std::span<const T> g) {
                          auto ga = grad_buffer(*ai);
                          const auto& x = ai->data;
                          for (std::size_t i = 0; i < ga.size(); ++i) {
                            ga[i] += g[i] * dfdx(x[i], saved.empty() ? T(0) : saved[i]);
                          }
                        });
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary<T>(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary<T>(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary<T>(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  return unary<T>(
      a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; }, false);
}

template <typename T>
BasicTensor<T> shift(const BasicTensor<T>& a, T offset) {
  return unary<T>(
      a, "shift", [offset](T x) { return x + offset; }, [](T, T) { return T(1); }, false);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return unary<T>(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); }, false);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return unary<T>(
      a, "sigmoid",
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); }, true);
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  return unary<T>(
      a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; }, false);
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
  return unary<T>(
      a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; }, true);
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& a) {
  // Subgradient 0 at the origin.
  return unary<T>(
      a, "abs", [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); }, false);
}

template <typename T>
BasicTensor<T> elementwise(Elementwise kind, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  switch (kind) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::mul: return mul(a, b);
    case Elementwise::scale:
      if (!b.defined() || b.numel() != 1) throw ShapeError("scale: factor must be a single value");
      return scale(a, b.item());
    case Elementwise::relu: return relu(a);
    case Elementwise::sigmoid: return sigmoid(a);
    case Elementwise::log: return log(a);
    case Elementwise::exp: return exp(a);
    case Elementwise::abs: return abs(a);
  }
  throw Error("unknown elementwise kind");
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  auto ad = a.data();
  T total = std::accumulate(ad.begin(), ad.end(), T(0));
  auto ai = a.impl();
  return make_result<T>(Shape{}, {total}, "sum", {&a}, [ai](std::span<const T> g) {
    auto ga = grad_buffer(*ai);
    for (auto& v : ga) v += g[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
BasicTensor<T> mean_spatial(const BasicTensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("mean_spatial expects [B,C,H,W], got " + shape_str(x.shape()));
  const auto bc = x.dim(0) * x.dim(1);
  const auto hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("mean_spatial over empty spatial extent");
  auto xd = x.data();
  std::vector<T> out(static_cast<std::size_t>(bc));
  for (std::int64_t i = 0; i < bc; ++i) {
    T s = 0;
    for (std::int64_t j = 0; j < hw; ++j) s += xd[i * hw + j];
    out[i] = s / static_cast<T>(hw);
  }
  auto xi = x.impl();
  return make_result<T>(Shape{x.dim(0), x.dim(1)}, std::move(out), "mean_spatial", {&x},
                        [xi, bc, hw](std::span<const T> g) {
                          auto gx = grad_buffer(*xi);
                          const T inv = T(1) / static_cast<T>(hw);
                          for (std::int64_t i = 0; i < bc; ++i) {
                            for (std::int64_t j = 0; j < hw; ++j) gx[i * hw + j] += g[i] * inv;
                          }
                        });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto ai = a.impl();
  return make_result<T>(std::move(shape), std::move(out), "reshape", {&a},
                        [ai](std::span<const T> g) { accumulate_grad(*ai, g); });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat axis out of range");
  Shape shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < r; ++d) {
      if (d != axis && p.dim(d) != shape[d]) {
        throw ShapeError("concat shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
      }
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < r; ++d) inner *= shape[d];

  std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)));
  std::vector<std::int64_t> chunk(parts.size());
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    chunk[p] = parts[p].dim(axis) * inner;
    auto pd = parts[p].data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * chunk[p], chunk[p], out.begin() + o * total * inner + offset);
    }
    offset += chunk[p];
  }
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<T>(std::move(shape), std::move(out), "concat", parts,
                        [impls, chunk, outer, inner, total](std::span<const T> g) {
                          std::int64_t off = 0;
                          for (std::size_t p = 0; p < impls.size(); ++p) {
                            if (impls[p]->requires_grad) {
                              auto gp = grad_buffer(*impls[p]);
                              for (std::int64_t o = 0; o < outer; ++o) {
                                for (std::int64_t j = 0; j < chunk[p]; ++j) {
                                  gp[o * chunk[p] + j] += g[o * total * inner + off + j];
                                }
                              }
                            }
                            off += chunk[p];
                          }
                        });
}

template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  std::vector<BasicTensor<T>> parts;
  parts.reserve(items.size());
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) {
      throw ShapeError("stack shape mismatch " + shape_str(t.shape()) + " vs " +
                       shape_str(items[0].shape()));
    }
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    parts.push_back(reshape(t, std::move(s)));
  }
  return concat(parts, 0);
}

template <typename T>
BasicTensor<T> select(const BasicTensor<T>& x, std::int64_t index) {
  if (x.rank() < 1 || index < 0 || index >= x.dim(0)) {
    throw ShapeError("select index " + std::to_string(index) + " out of range for " +
                     shape_str(x.shape()));
  }
  Shape s(x.shape().begin() + 1, x.shape().end());
  const auto n = shape_numel(s);
  auto d = x.data().subspan(static_cast<std::size_t>(index * n), static_cast<std::size_t>(n));
  return BasicTensor<T>(std::move(s), std::vector<T>(d.begin(), d.end()));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 3)) {
    throw ShapeError("matmul expects a[m,k] and b[k,n] or b[B,k,n], got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const bool batched = b.rank() == 3;
  const std::int64_t batch = batched ? b.dim(0) : 1;
  const std::int64_t m = a.dim(0), k = a.dim(1);
  const std::int64_t kb = b.dim(batched ? 1 : 0), n = b.dim(batched ? 2 : 1);
  if (k != kb) {
    throw ShapeError("matmul inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    gemm<T>(false, false, m, n, k, T(1), a.data().data(), b.data().data() + i * k * n, T(0),
            out.data() + i * m * n);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>(std::move(shape), std::move(out), "matmul", {&a, &b},
                        [ai, bi, batch, m, n, k](std::span<const T> g) {
                          for (std::int64_t i = 0; i < batch; ++i) {
                            const T* gi = g.data() + i * m * n;
                            if (ai->requires_grad) {
                              gemm<T>(false, true, m, k, n, T(1), gi, bi->data.data() + i * k * n,
                                      T(1), grad_buffer(*ai).data());
                            }
                            if (bi->requires_grad) {
                              gemm<T>(true, false, k, n, m, T(1), ai->data.data(), gi, T(1),
                                      grad_buffer(*bi).data() + i * k * n);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                     shape_str(w.shape()));
  }
  const std::int64_t batch = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(batch * n));
  gemm<T>(false, false, batch, n, k, T(1), x.data().data(), w.data().data(), T(0), out.data());
  if (bias.defined()) {
    for (std::int64_t i = 0; i < batch; ++i) {
      for (std::int64_t j = 0; j < n; ++j) out[i * n + j] += bias.data()[j];
    }
  }
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result<T>(Shape{batch, n}, std::move(out), "linear", {&x, &w, &bias},
                        [xi, wi, bi, batch, k, n](std::span<const T> g) {
                          if (xi->requires_grad) {
                            gemm<T>(false, true, batch, k, n, T(1), g.data(), wi->data.data(), T(1),
                                    grad_buffer(*xi).data());
                          }
                          if (wi->requires_grad) {
                            gemm<T>(true, false, k, n, batch, T(1), xi->data.data(), g.data(), T(1),
                                    grad_buffer(*wi).data());
                          }
                          if (bi && bi->requires_grad) {
                            auto gb = grad_buffer(*bi);
                            for (std::int64_t i = 0; i < batch; ++i) {
                              for (std::int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) < 2) {
    throw ShapeError("log_softmax expects [B,C] with C >= 2, got " + shape_str(x.shape()));
  }
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xd.data() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T s = 0;
    for (std::int64_t c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
    const T lse = mx + std::log(s);
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  auto xi = x.impl();
  std::vector<T> saved;
  if (x.requires_grad() && grad_enabled()) saved = out;
  return make_result<T>(x.shape(), std::move(out), "log_softmax", {&x},
                        [xi, rows, cols, saved = std::move(saved)](std::span<const T> g) {
                          auto gx = grad_buffer(*xi);
                          for (std::int64_t r = 0; r < rows; ++r) {
                            T gs = 0;
                            for (std::int64_t c = 0; c < cols; ++c) gs += g[r * cols + c];
                            for (std::int64_t c = 0; c < cols; ++c) {
                              const auto i = r * cols + c;
                              gx[i] += g[i] - std::exp(saved[i]) * gs;
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const int> index) {
  if (x.rank() != 2 || static_cast<std::int64_t>(index.size()) != x.dim(0)) {
    throw ShapeError("pick expects [B,C] and B indices, got " + shape_str(x.shape()));
  }
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  std::vector<int> idx(index.begin(), index.end());
  std::vector<T> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || idx[r] >= cols) throw ConfigError("target out of range");
    out[r] = x.data()[r * cols + idx[r]];
  }
  auto xi = x.impl();
  return make_result<T>(Shape{rows}, std::move(out), "pick", {&x},
                        [xi, idx, cols](std::span<const T> g) {
                          auto gx = grad_buffer(*xi);
                          for (std::size_t r = 0; r < idx.size(); ++r) gx[r * cols + idx[r]] += g[r];
                        });
}

template <typename T>
BasicTensor<T> nll_loss(const BasicTensor<T>& logp, std::span<const int> target) {
  auto picked = pick(logp, target);
  return scale(sum(picked), T(-1) / static_cast<T>(target.size()));
}

#define LMAC_INSTANTIATE(T)                                                                       \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, T, const T*,        \
                        const T*, T, T*);                                                         \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> shift(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                         \
  template BasicTensor<T> log(const BasicTensor<T>&);                                             \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                             \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                             \
  template BasicTensor<T> elementwise(Elementwise, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                             \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                            \
  template BasicTensor<T> mean_spatial(const BasicTensor<T>&);                                    \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                  \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, int);                        \
  template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&);                              \
  template BasicTensor<T> select(const BasicTensor<T>&, std::int64_t);                            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                 const BasicTensor<T>&);                                          \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&);                                     \
  template BasicTensor<T> pick(const BasicTensor<T>&, std::span<const int>);                      \
  template BasicTensor<T> nll_loss(const BasicTensor<T>&, std::span<const int>);

LMAC_INSTANTIATE(float)
LMAC_INSTANTIATE(double)
#undef LMAC_INSTANTIATE

}  // namespace lmac
