#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lmac/dsp.hpp"

namespace lmac {

using Rng = std::mt19937_64;

inline constexpr int kNumClasses = 8;
inline constexpr double kClipSeconds = 2.0;
inline constexpr std::int64_t kClipSamples = 32000;

enum class SynthKind {
  pure_tone,
  harmonic_tone,
  up_chirp,
  down_chirp,
  am_noise_burst,
  click_train,
  low_band_noise,
  high_band_noise,
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Per-class parameter ranges. `f0` is the tone frequency, chirp start, or
/// lower band edge; `f1` the chirp end or upper band edge; `rate` the burst
/// or click rate in Hz.
struct SynthClass {
  int id = 0;
  SynthKind kind = SynthKind::pure_tone;
  std::string_view name;
  Range f0;
  Range f1;
  Range rate;
};

const std::array<SynthClass, kNumClasses>& synth_classes();
std::string_view synth_kind_name(SynthKind kind);

/// Fully drawn parameters of one clip.
struct ClipRecipe {
  SynthKind kind = SynthKind::pure_tone;
  double f0 = 1000.0;
  double f1 = 0.0;
  double rate = 0.0;
  double amplitude = 0.5;
  double phase = 0.0;
};

ClipRecipe draw_recipe(int class_id, Rng& rng);
/// Renders `num_samples` samples at 16 kHz, peak-normalized to the recipe
/// amplitude. Noise-based kinds draw from `rng`.
std::vector<float> render(const ClipRecipe& recipe, Rng& rng,
                          std::int64_t num_samples = kClipSamples);

/// 2 s labeled clip of class `class_id` with parameters drawn from `rng`.
AudioClip generate_clip(int class_id, Rng& rng);

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index);

enum class Contamination { none, white_noise, class_mixture };
enum class Split { train, valid, test, ood };

std::string_view to_string(Contamination c);
std::string_view to_string(Split s);
/// Accepts "none", "white", "white_noise", "mixture", "class_mixture".
Contamination parse_contamination(std::string_view text);

struct DatasetConfig {
  int train_per_class = 200;
  int valid_per_class = 40;
  int test_per_class = 40;
  std::uint64_t seed = 0;
  Contamination contamination = Contamination::none;
  double snr_db = 3.0;

  void validate() const;
};

struct DatasetSplit {
  std::vector<AudioClip> clips;
  std::vector<std::uint64_t> clip_seeds;
  Split split = Split::train;
  Contamination contamination = Contamination::none;
  std::uint64_t seed = 0;

  std::size_t size() const { return clips.size(); }
  std::vector<int> labels() const;
};

struct Dataset {
  DatasetSplit train;
  DatasetSplit valid;
  DatasetSplit test;
};

/// One split with `per_class` clips of every class, interleaved by class.
DatasetSplit build_split(const DatasetConfig& config, Split split, int per_class);
Dataset build_dataset(const DatasetConfig& config);

/// Pairs clips of distinct classes and mixes each pair at 0 dB. The label
/// and clean reference come from the first clip of a pair.
DatasetSplit make_ood_mixtures(const DatasetSplit& test, Rng& rng);

/// First `per_class` clips of each class, in original order.
DatasetSplit take_per_class(const DatasetSplit& split, int per_class);

/// Writes WAVs plus a JSON-lines manifest (`manifest.jsonl`) under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
void write_split(const std::filesystem::path& dir, const DatasetSplit& split,
                 std::ostream& manifest);
/// Reads the manifest written by write_dataset.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace lmac
