#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmac/metrics.hpp"
#include "lmac/models.hpp"

namespace lmac {

/// Mean SSIM over 7x7 uniform windows after a joint min-max rescale of the
/// pair to [0, 1]. Constant, identical inputs score 1.
double ssim(const Tensor& a, const Tensor& b);

// ROAR ------------------------------------------------------------------------

struct RoarConfig {
  std::vector<double> percents{0, 10, 20, 30, 50, 70, 90};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  ClassifierTrainConfig train;

  void validate() const;
};

struct RoarCurve {
  std::string method;
  std::vector<double> percents;
  std::vector<double> accuracy;                // mean over seeds
  std::vector<std::vector<double>> per_seed;   // [percent][seed]
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const;
};

/// Linear magnitudes with labels and STFT-domain attribution maps.
struct RoarSet {
  std::vector<Tensor> magnitude;
  std::vector<int> labels;
  std::vector<Tensor> attribution;

  std::size_t size() const { return magnitude.size(); }
};

/// Zeroes the round(percent% * n) bins with the largest attribution; ties
/// go to the lower flat index.
Tensor ablate_top_percent(const Tensor& magnitude, const Tensor& attribution, double percent);

/// Builds a RoarSet from evaluation items and a method's attributions
/// converted to STFT masking maps.
RoarSet make_roar_set(const std::vector<EvalItem>& items, const std::vector<int>& labels,
                      const AttributionMethod& method, const MelFilterbank& fb);

/// Retrains a fresh classifier on each ablated training set and reports
/// ablated-test accuracy. `baseline` (accuracy per seed at p = 0) may be
/// supplied to reuse unablated runs across methods.
RoarCurve roar(const RoarSet& train, const RoarSet& test, const MelFilterbank& fb,
               const RoarConfig& config, const std::string& method,
               const std::vector<double>* baseline = nullptr,
               const std::function<void(double percent, std::uint64_t seed, double acc)>& progress = {});

// Cascading randomization ---------------------------------------------------

struct RandomizationTrace {
  std::string method;
  std::vector<int> k_blocks;
  std::vector<double> ssim_to_original;
  std::vector<Tensor> snapshots;  // first item's map per k

  nlohmann::json to_json() const;
};

/// Maps a (possibly randomized) classifier to one interpretation per item.
using InterpretFn = std::function<std::vector<Tensor>(const Classifier&)>;

/// For k = 0..blocks+1 randomizes the top k parameter groups (each k from a
/// fresh Rng(seed), so groups shared across k get identical draws) and
/// scores each item's map against k = 0.
RandomizationTrace cascading_randomization(const Classifier& classifier, const InterpretFn& interpret,
                                           std::uint64_t seed, const std::string& method = "lmac");

}  // namespace lmac
