#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lmac/ops.hpp"
#include "lmac/tensor.hpp"

namespace lmac::testing {

inline Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                              bool requires_grad = false) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = u(rng);
  return Tensor64(std::move(shape), std::move(v), requires_grad);
}

/// Relative L2 error between analytic and central-difference gradients of
/// `f` (scalar output) with respect to every tensor in `inputs`. Returns
/// the worst input's error.
inline double gradcheck(const std::function<Tensor64(const std::vector<Tensor64>&)>& f,
                        std::vector<Tensor64> inputs, double h = 1e-6) {
  for (auto& x : inputs) {
    x = x.detach();
    x.set_requires_grad(true);
  }
  f(inputs).backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
    std::vector<double> numeric(analytic.size());
    {
      NoGradGuard guard;
      auto values = x.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = f(inputs).item();
        values[i] = orig - h;
        const double down = f(inputs).item();
        values[i] = orig;
        numeric[i] = (up - down) / (2.0 * h);
      }
    }
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      norm += numeric[i] * numeric[i];
    }
    const double err = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
    worst = std::max(worst, norm == 0.0 && diff == 0.0 ? 0.0 : err);
  }
  return worst;
}

/// Contracts a tensor-valued function with a fixed random cotangent so its
/// full Jacobian participates in the check.
inline std::function<Tensor64(const std::vector<Tensor64>&)> contracted(
    std::function<Tensor64(const std::vector<Tensor64>&)> f, std::uint64_t seed = 7) {
  return [f = std::move(f), seed](const std::vector<Tensor64>& in) {
    Tensor64 out = f(in);
    std::mt19937_64 rng(seed);
    return sum(mul(out, random_tensor(out.shape(), rng)));
  };
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace lmac::testing
