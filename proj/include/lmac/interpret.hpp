#pragma once

#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "lmac/dsp.hpp"
#include "lmac/models.hpp"
#include "lmac/synth.hpp"

namespace lmac {

struct MaskLossConfig {
  double lambda_in = 4.0;
  double lambda_out = 2.0;
  double lambda_s = 0.25;
  double lambda_g = 0.0;
  double cct = 0.6;
  /// Per-item masked-out CE saturates at log(num_classes) (chance level).
  bool cap_out = true;

  void validate() const;
  nlohmann::json to_json() const;
  /// Fields absent from `j` keep their value in `defaults`.
  static MaskLossConfig from_json(const nlohmann::json& j, MaskLossConfig defaults);
};

/// Maps a (possibly masked) linear magnitude [B,F,T] to classifier input.
template <typename T>
using FeatureFn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

template <typename T>
FeatureFn<T> log_mel_features(const MelFilterbank& fb) {
  return [&fb](const BasicTensor<T>& magnitude) { return fb.log_mel(magnitude); };
}

template <typename T>
struct BasicMaskLoss {
  BasicTensor<T> total;     // lambda_in * term_in - lambda_out * term_out + reg
  BasicTensor<T> term_in;   // CE(f(M * X), y)
  BasicTensor<T> term_out;  // CE(f((1 - M) * X), y), per item capped at log C
  BasicTensor<T> reg;
};

/// Sparsity plus (per-item gated) guidance penalty. `guided` has one flag
/// per batch item, or is empty for no guidance. Accepts [F,T] or [B,F,T].
template <typename T>
BasicTensor<T> regularizer(const BasicTensor<T>& mask, const BasicTensor<T>& magnitude,
                           const BasicTensor<T>& target, const MaskLossConfig& cfg,
                           std::span<const bool> guided = {});

/// Masked-in / masked-out objective over a batch of magnitudes and masks
/// ([F,T] or [B,F,T]). `y` holds one class per item. `target` may be
/// undefined when no item is guided.
template <typename T>
BasicMaskLoss<T> masking_loss(const BasicClassifier<T>& classifier, const FeatureFn<T>& features_of,
                              const BasicTensor<T>& magnitude, const BasicTensor<T>& mask,
                              std::span<const int> y, const MaskLossConfig& cfg,
                              const BasicTensor<T>& target = {}, std::span<const bool> guided = {});

/// 1 where x exceeds its median (midpoint of the two middle values for even
/// counts), else 0.
Tensor binarize_at_median(const Tensor& x);
/// Cosine similarity of mask and binarized target; 0 if either is all-zero.
double mask_target_similarity(const Tensor& mask, const Tensor& target);
bool cct_gate(const Tensor& mask, const Tensor& target, double cct);

struct InterpreterTrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  MaskLossConfig loss;

  void validate() const;
};

struct InterpreterEpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double term_in = 0.0;
  double term_out = 0.0;
  double reg = 0.0;
  double mask_mean = 0.0;
  double gated_fraction = 0.0;

  nlohmann::json to_json() const;
};

/// Per-clip inputs for decoder training. The classifier is frozen and
/// inputs are fixed, so its latents and decisions are computed once.
struct InterpreterData {
  std::vector<Tensor> magnitude;             // [F, T]
  std::vector<Tensor> target;                // clean magnitude, or the input's own
  std::vector<int> predicted;                // classifier decision on the input
  std::vector<std::vector<Tensor>> latents;  // per level, per item [C, H, W]
  std::int64_t frames = 0;

  std::size_t size() const { return magnitude.size(); }
};

InterpreterData prepare_interpreter_data(const Classifier& classifier, const MelFilterbank& fb,
                                         const std::vector<AudioClip>& clips,
                                         const StftParams& stft = {});

using EpochCallback = std::function<void(const InterpreterEpochLog&)>;

/// Stage-1 decoder training; requires lambda_g == 0.
Decoder train_interpreter(const Classifier& classifier, const Decoder& decoder,
                          const MelFilterbank& fb, const InterpreterData& data,
                          const InterpreterTrainConfig& config, const EpochCallback& on_epoch = {});

/// Same loop with the guidance term applied to items whose current mask
/// passes the CCT gate against their target.
Decoder finetune_interpreter(const Classifier& classifier, const Decoder& decoder,
                             const MelFilterbank& fb, const InterpreterData& data,
                             const InterpreterTrainConfig& config,
                             const EpochCallback& on_epoch = {});

/// Decoder masks [F, T] for a list of magnitudes.
std::vector<Tensor> predict_masks(const Classifier& classifier, const Decoder& decoder,
                                  const MelFilterbank& fb, const std::vector<Tensor>& magnitudes,
                                  int batch_size = 16);

}  // namespace lmac
