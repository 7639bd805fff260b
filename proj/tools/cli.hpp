#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmac/baselines.hpp"
#include "lmac/interpret.hpp"
#include "lmac/sanity.hpp"

namespace lmac::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kMissing = 2, kNumeric = 3 };

/// Every setting a command may read. Serialized as config.json into the
/// output directory before any work starts.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ClassifierArch arch;
  ClassifierTrainConfig classifier;
  InterpreterTrainConfig interpreter;
  InterpreterTrainConfig finetune;
  BaselineConfig baselines;
  std::vector<std::string> methods{"lmac", "saliency", "smoothgrad", "ig", "gradcam", "random", "all_ones"};
  MaskingDomain domain = MaskingDomain::stft;
  double hard_threshold = -1.0;
  RoarConfig roar;
  /// ROAR retrains on this many clips per class from the training split.
  int roar_train_per_class = 0;  // 0: one-third of the split
  std::string randomize_method = "lmac";
  int randomize_items = 16;

  RunConfig();
  void validate() const;
  nlohmann::json to_json() const;
  /// Fields absent from `j` keep their current value.
  void merge(const nlohmann::json& j);
};

/// Runs one CLI invocation (args exclude the program name). Returns the
/// process exit code; diagnostics go to `err`, progress to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Grayscale 8-bit PNG of a [H, W] map with values in [0, 1]; row 0 of the
/// image is the last row of the map.
void write_png(const std::filesystem::path& path, const Tensor& map);
void write_gray_png(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, int width,
                    int height);

}  // namespace lmac::cli
