#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmac/tensor.hpp"

namespace lmac {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers for one parameter.
struct AdamMoments {
  std::vector<float> m;
  std::vector<float> v;
};

/// One bias-corrected Adam update of `param` in place. `step` is 1-based.
void adam_step(std::span<float> param, std::span<const float> grad, AdamMoments& state,
               std::int64_t step, const AdamConfig& cfg);

/// Adam over a fixed parameter list. Parameters with no accumulated
/// gradient are left untouched on that step.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  std::int64_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace lmac
