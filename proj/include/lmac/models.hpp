#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lmac/dsp.hpp"
#include "lmac/synth.hpp"
#include "lmac/tensor.hpp"

namespace lmac {

struct ClassifierArch {
  std::vector<int> channels{16, 32, 64, 64, 128, 128};
  int num_classes = kNumClasses;
  int n_mels = 40;
  /// Latents are the outputs of the last `num_latents` blocks.
  int num_latents = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierArch from_json(const nlohmann::json& j);
};

template <typename T>
struct BasicClassifierOutput {
  BasicTensor<T> logits;                   // [B, C]
  std::vector<std::vector<double>> probs;  // softmax of logits, per item
  std::vector<int> predicted;              // argmax per item
  std::vector<BasicTensor<T>> latents;     // shallow to deep, each [B, C_i, H_i, W_i]
};

/// Softmax of one logit row, evaluated in double.
std::vector<double> softmax(std::span<const double> logits);
int argmax(std::span<const double> values);

/// Small VGG-style CNN over log-mel features: blocks of conv3x3 + relu +
/// avgpool, then global average pooling and a linear head. Inputs are
/// standardized with a fixed mean/std stored alongside the weights.
template <typename T>
class BasicClassifier {
 public:
  explicit BasicClassifier(ClassifierArch arch = {}, std::uint64_t seed = 0);

  const ClassifierArch& arch() const { return arch_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  /// features: [n_mels, T] or [B, n_mels, T], T >= 64.
  BasicClassifierOutput<T> forward(const BasicTensor<T>& features) const;
  /// Logits only; skips latent bookkeeping and probabilities.
  BasicTensor<T> logits(const BasicTensor<T>& features) const;

  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const;
  std::vector<BasicTensor<T>> parameters() const;
  std::int64_t parameter_count() const;
  void set_trainable(bool trainable);

  double input_mean() const { return input_mean_; }
  double input_std() const { return input_std_; }
  void set_normalization(double mean, double stddev);

  /// Re-draws block `index` (0-based) or the head from `rng`.
  void reinitialize_block(int index, Rng& rng);
  void reinitialize_head(Rng& rng);

  /// Deep copy; the result shares no storage with this model.
  BasicClassifier clone() const;
  template <typename U>
  BasicClassifier<U> cast() const;

  void save(const std::filesystem::path& path) const;
  static BasicClassifier load(const std::filesystem::path& path);

 private:
  template <typename>
  friend class BasicClassifier;

  struct Block {
    BasicTensor<T> weight;  // [out, in, 3, 3]
    BasicTensor<T> bias;    // [out]
  };

  BasicTensor<T> features_in(const BasicTensor<T>& features) const;

  ClassifierArch arch_;
  std::vector<Block> blocks_;
  BasicTensor<T> head_weight_;  // [C_last, classes]
  BasicTensor<T> head_bias_;    // [classes]
  double input_mean_ = 0.0;
  double input_std_ = 1.0;
};

using Classifier = BasicClassifier<float>;
using ClassifierOutput = BasicClassifierOutput<float>;

struct DecoderArch {
  /// Channels of the latents the decoder consumes, shallow to deep.
  std::vector<int> latent_channels{64, 64, 128, 128};
  /// Output channels of each transposed-conv stage, deep to shallow.
  std::vector<int> stage_channels{64, 64, 32, 32};
  int kernel = 4;
  int stride = 2;
  int padding = 1;
  int out_bins = 257;

  static DecoderArch for_classifier(const ClassifierArch& arch, int out_bins = 257);
  void validate() const;
  nlohmann::json to_json() const;
  static DecoderArch from_json(const nlohmann::json& j);
};

/// Mask decoder over classifier latents. Stage i upsamples the previous
/// stage (the deepest latent for i = 0) concatenated with the latent of
/// matching resolution, then a 1x1 projection is resized to [F, T] and
/// squashed into (0, 1).
template <typename T>
class BasicDecoder {
 public:
  explicit BasicDecoder(DecoderArch arch = {}, std::uint64_t seed = 0);

  const DecoderArch& arch() const { return arch_; }

  /// Returns [B, out_bins, frames].
  BasicTensor<T> forward(const std::vector<BasicTensor<T>>& latents, std::int64_t frames) const;

  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() const;
  std::vector<BasicTensor<T>> parameters() const;
  void set_trainable(bool trainable);

  BasicDecoder clone() const;
  template <typename U>
  BasicDecoder<U> cast() const;

  void save(const std::filesystem::path& path) const;
  static BasicDecoder load(const std::filesystem::path& path);

 private:
  template <typename>
  friend class BasicDecoder;

  struct Stage {
    BasicTensor<T> weight;  // [in, out, k, k]
    BasicTensor<T> bias;    // [out]
  };

  DecoderArch arch_;
  std::vector<Stage> stages_;
  BasicTensor<T> proj_weight_;  // [1, C, 1, 1]
  BasicTensor<T> proj_bias_;    // [1]
};

using Decoder = BasicDecoder<float>;

// Training -----------------------------------------------------------------

/// Log-mel features plus labels for one split.
struct LabeledFeatures {
  std::vector<Tensor> features;  // each [n_mels, T]
  std::vector<int> labels;

  std::size_t size() const { return features.size(); }
};

LabeledFeatures featurize(const DatasetSplit& split, const MelFilterbank& fb,
                          const StftParams& stft = {});

/// Concatenates items [begin, end) of `items` (selected through `order` when
/// non-empty) into one batch tensor.
Tensor make_batch(const std::vector<Tensor>& items, std::span<const std::size_t> order,
                  std::size_t begin, std::size_t end);

struct ClassifierTrainConfig {
  int epochs = 15;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassifierTrainLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

Classifier train_classifier(const LabeledFeatures& train, const ClassifierTrainConfig& config,
                            const ClassifierArch& arch = {},
                            const std::function<void(const ClassifierTrainLog&)>& on_epoch = {});

/// Fraction of items whose argmax matches the label.
double accuracy(const Classifier& model, const LabeledFeatures& data, int batch_size = 32);

/// Copy of `model` with the head and the (k - 1) deepest blocks re-drawn.
/// k = 0 returns an identical copy.
Classifier randomize_from_top(const Classifier& model, int k_blocks, Rng& rng);

}  // namespace lmac
