#include "lmac/optim.hpp"

#include <cmath>

#include "lmac/error.hpp"

namespace lmac {

void adam_step(std::span<float> param, std::span<const float> grad, AdamMoments& state,
               std::int64_t step, const AdamConfig& cfg) {
  if (grad.size() != param.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (state.m.empty()) state.m.assign(param.size(), 0.0f);
  if (state.v.empty()) state.v.assign(param.size(), 0.0f);
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam_step: state buffers do not match parameter size");
  }
  if (step < 1) throw ConfigError("adam_step: step count is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= static_cast<float>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    adam_step(p.mutable_data(), p.grad(), moments_[i], step_, cfg_);
    detail::check_finite<float>(p.data(), "adam_step");
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace lmac
