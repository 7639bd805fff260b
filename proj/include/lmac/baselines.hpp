#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmac/metrics.hpp"
#include "lmac/models.hpp"

namespace lmac {

/// Differentiable model view used by the gradient baselines. `logits` is
/// [B, C]; `activation` is the [B, K, H, W] map GradCAM explains (may be
/// undefined for models without one).
struct ModelOutput {
  Tensor logits;
  Tensor activation;
};

/// Receives features with a leading batch axis.
using ModelFn = std::function<ModelOutput(const Tensor& features)>;

/// Classifier logits with the deepest block output as GradCAM activation.
ModelFn classifier_model(const Classifier& classifier);

struct SmoothGradConfig {
  int n_samples = 25;
  double sigma_fraction = 0.1;  // of (max - min) of the input
  std::uint64_t seed = 0;
};

struct IgConfig {
  int n_steps = 32;
};

struct BaselineConfig {
  SmoothGradConfig smoothgrad;
  IgConfig ig;
  int batch_size = 32;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Gradient of logit c with respect to each input in `points` ([N, ...]).
Tensor input_gradients(const ModelFn& model, const Tensor& points, int c);

/// |d f_c / d x|, shape of `features`.
Tensor saliency(const ModelFn& model, const Tensor& features, int c);
Tensor smoothgrad(const ModelFn& model, const Tensor& features, int c,
                  const SmoothGradConfig& cfg = {}, int batch_size = 32);
/// Signed left-Riemann integrated gradients from `baseline` (zeros when
/// undefined).
Tensor integrated_gradients(const ModelFn& model, const Tensor& features, int c,
                            const IgConfig& cfg = {}, const Tensor& baseline = {},
                            int batch_size = 32);
/// ReLU(sum_k alpha_k A_k) resized to the features' shape and max-normalized.
Tensor gradcam(const ModelFn& model, const Tensor& features, int c);

// Method registry -------------------------------------------------------------

struct MethodContext {
  const Classifier* classifier = nullptr;
  const Decoder* decoder = nullptr;
  const MelFilterbank* fb = nullptr;
  BaselineConfig baselines;
  MaskingDomain domain = MaskingDomain::stft;
  std::uint64_t seed = 0;
  /// When >= 0, L-MAC masks are thresholded to {0, 1} at this value.
  double hard_threshold = -1.0;
};

/// lmac, lmac_hard, saliency, smoothgrad, ig, gradcam, random, all_ones.
const std::vector<std::string>& method_names();
AttributionMethod make_method(const std::string& name, const MethodContext& ctx);

}  // namespace lmac
