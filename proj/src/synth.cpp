#include "lmac/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "lmac/error.hpp"

namespace lmac {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFadeSeconds = 0.01;

const std::array<SynthClass, kNumClasses> kClasses{{
    {0, SynthKind::pure_tone, "pure_tone", {400.0, 3000.0}, {}, {}},
    {1, SynthKind::harmonic_tone, "harmonic_tone", {150.0, 400.0}, {}, {}},
    {2, SynthKind::up_chirp, "up_chirp", {300.0, 1200.0}, {2500.0, 5000.0}, {}},
    {3, SynthKind::down_chirp, "down_chirp", {2500.0, 5000.0}, {300.0, 1200.0}, {}},
    {4, SynthKind::am_noise_burst, "am_noise_burst", {}, {}, {2.0, 6.0}},
    {5, SynthKind::click_train, "click_train", {}, {}, {10.0, 40.0}},
    {6, SynthKind::low_band_noise, "low_band_noise", {100.0, 300.0}, {700.0, 1200.0}, {}},
    {7, SynthKind::high_band_noise, "high_band_noise", {3500.0, 4500.0}, {6000.0, 7500.0}, {}},
}};

constexpr int kHarmonics = 6;
constexpr int kClickLength = 32;

double uniform(Rng& rng, Range r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::vector<double> white(Rng& rng, std::int64_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = dist(rng);
  return out;
}

void apply_fade(std::vector<double>& x) {
  const auto n = static_cast<std::int64_t>(x.size());
  const auto len = std::min<std::int64_t>(static_cast<std::int64_t>(kFadeSeconds * kSampleRate), n / 2);
  for (std::int64_t i = 0; i < len; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / len);
    x[i] *= g;
    x[n - 1 - i] *= g;
  }
}

std::vector<float> peak_normalize(const std::vector<double>& x, double amplitude) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double g = peak > 0.0 ? amplitude / peak : 0.0;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * g);
  return out;
}

int split_index(Split s) { return static_cast<int>(s); }

}  // namespace

const std::array<SynthClass, kNumClasses>& synth_classes() { return kClasses; }

std::string_view synth_kind_name(SynthKind kind) {
  return kClasses[static_cast<std::size_t>(kind)].name;
}

ClipRecipe draw_recipe(int class_id, Rng& rng) {
  if (class_id < 0 || class_id >= kNumClasses) {
    throw ConfigError("class id " + std::to_string(class_id) + " out of range");
  }
  const SynthClass& c = kClasses[static_cast<std::size_t>(class_id)];
  ClipRecipe r;
  r.kind = c.kind;
  r.amplitude = uniform(rng, {0.3, 0.8});
  r.phase = uniform(rng, {0.0, kTwoPi});
  switch (c.kind) {
    case SynthKind::pure_tone:
    case SynthKind::harmonic_tone:
      r.f0 = uniform(rng, c.f0);
      break;
    case SynthKind::up_chirp:
    case SynthKind::down_chirp:
    case SynthKind::low_band_noise:
    case SynthKind::high_band_noise:
      r.f0 = uniform(rng, c.f0);
      r.f1 = uniform(rng, c.f1);
      break;
    case SynthKind::am_noise_burst:
      r.rate = uniform(rng, c.rate);
      break;
    case SynthKind::click_train: {
      const double period = std::round(kSampleRate / uniform(rng, c.rate));
      r.rate = kSampleRate / period;
      break;
    }
  }
  return r;
}

std::vector<float> render(const ClipRecipe& r, Rng& rng, std::int64_t num_samples) {
  if (num_samples <= 0) throw ConfigError("render: num_samples must be positive");
  std::vector<double> x(static_cast<std::size_t>(num_samples), 0.0);
  const double sr = kSampleRate;
  const double duration = static_cast<double>(num_samples) / sr;
  switch (r.kind) {
    case SynthKind::pure_tone:
      for (std::int64_t i = 0; i < num_samples; ++i) {
        x[i] = std::sin(kTwoPi * r.f0 * i / sr + r.phase);
      }
      apply_fade(x);
      break;
    case SynthKind::harmonic_tone:
      for (int h = 1; h <= kHarmonics; ++h) {
        const double ph = r.phase * h;
        for (std::int64_t i = 0; i < num_samples; ++i) {
          x[i] += std::sin(kTwoPi * h * r.f0 * i / sr + ph) / h;
        }
      }
      apply_fade(x);
      break;
    case SynthKind::up_chirp:
    case SynthKind::down_chirp: {
      const double k = (r.f1 - r.f0) / duration;
      for (std::int64_t i = 0; i < num_samples; ++i) {
        const double t = i / sr;
        x[i] = std::sin(kTwoPi * (r.f0 * t + 0.5 * k * t * t) + r.phase);
      }
      apply_fade(x);
      break;
    }
    case SynthKind::am_noise_burst: {
      x = white(rng, num_samples);
      for (std::int64_t i = 0; i < num_samples; ++i) {
        const double env = 0.5 - 0.5 * std::cos(kTwoPi * r.rate * i / sr + r.phase);
        x[i] *= env * env;
      }
      break;
    }
    case SynthKind::click_train: {
      const auto period = static_cast<std::int64_t>(std::llround(sr / r.rate));
      const auto offset = static_cast<std::int64_t>(r.phase / kTwoPi * period) % period;
      for (std::int64_t start = offset; start < num_samples; start += period) {
        for (int j = 0; j < kClickLength && start + j < num_samples; ++j) {
          x[start + j] = std::exp(-j / 4.0);
        }
      }
      break;
    }
    case SynthKind::low_band_noise:
    case SynthKind::high_band_noise:
      x = band_limit(white(rng, num_samples), r.f0, r.f1);
      apply_fade(x);
      break;
  }
  return peak_normalize(x, r.amplitude);
}

AudioClip generate_clip(int class_id, Rng& rng) {
  const ClipRecipe recipe = draw_recipe(class_id, rng);
  AudioClip clip;
  clip.samples = render(recipe, rng);
  clip.label = class_id;
  return clip;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

std::string_view to_string(Contamination c) {
  switch (c) {
    case Contamination::none: return "none";
    case Contamination::white_noise: return "white_noise";
    case Contamination::class_mixture: return "class_mixture";
  }
  return "none";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::ood: return "ood";
  }
  return "train";
}

Contamination parse_contamination(std::string_view text) {
  if (text == "none") return Contamination::none;
  if (text == "white" || text == "white_noise") return Contamination::white_noise;
  if (text == "mixture" || text == "class_mixture") return Contamination::class_mixture;
  throw ConfigError("unknown contamination '" + std::string(text) + "'");
}

void DatasetConfig::validate() const {
  if (train_per_class < 1 || valid_per_class < 1 || test_per_class < 1) {
    throw ConfigError("per-class clip counts must be >= 1");
  }
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
}

std::vector<int> DatasetSplit::labels() const {
  std::vector<int> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.label.value_or(-1));
  return out;
}

DatasetSplit build_split(const DatasetConfig& config, Split split, int per_class) {
  if (per_class < 1) throw ConfigError("per-class clip count must be >= 1");
  DatasetSplit out;
  out.split = split;
  out.contamination = config.contamination;
  out.seed = config.seed;
  const std::uint64_t split_seed = child_seed(config.seed, split_index(split) + 1);
  for (int j = 0; j < per_class; ++j) {
    for (int c = 0; c < kNumClasses; ++c) {
      const std::uint64_t seed = child_seed(split_seed, static_cast<std::uint64_t>(j) * kNumClasses + c);
      Rng rng(seed);
      AudioClip clip = generate_clip(c, rng);
      switch (config.contamination) {
        case Contamination::none:
          break;
        case Contamination::white_noise: {
          AudioClip noise;
          noise.samples = peak_normalize(white(rng, kClipSamples), 1.0);
          clip = mix_at_snr(clip, noise, config.snr_db);
          break;
        }
        case Contamination::class_mixture: {
          const int other = (c + 1 + static_cast<int>(rng() % (kNumClasses - 1))) % kNumClasses;
          clip = mix_at_snr(clip, generate_clip(other, rng), config.snr_db);
          break;
        }
      }
      out.clips.push_back(std::move(clip));
      out.clip_seeds.push_back(seed);
    }
  }
  return out;
}

Dataset build_dataset(const DatasetConfig& config) {
  config.validate();
  return {build_split(config, Split::train, config.train_per_class),
          build_split(config, Split::valid, config.valid_per_class),
          build_split(config, Split::test, config.test_per_class)};
}

DatasetSplit make_ood_mixtures(const DatasetSplit& test, Rng& rng) {
  const std::size_t n = test.clips.size();
  if (n < 2) throw ConfigError("make_ood_mixtures: insufficient clips");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    if (!test.clips[i].label) throw ConfigError("make_ood_mixtures: unlabeled clip");
    by_class[*test.clips[i].label].push_back(i);
  }
  if (by_class.size() < 2) throw ConfigError("make_ood_mixtures: need at least 2 classes");
  std::vector<std::size_t> order;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    order.insert(order.end(), idx.begin(), idx.end());
  }
  const std::size_t half = n / 2;
  DatasetSplit out;
  out.split = Split::ood;
  out.contamination = Contamination::class_mixture;
  out.seed = test.seed;
  for (std::size_t k = 0; k < half; ++k) {
    const AudioClip& first = test.clips[order[k]];
    const AudioClip& second = test.clips[order[k + half]];
    if (*first.label == *second.label) {
      throw ConfigError("make_ood_mixtures: insufficient clips of distinct classes");
    }
    out.clips.push_back(mix_at_snr(first, second, 0.0));
    out.clip_seeds.push_back(test.clip_seeds.empty() ? 0 : test.clip_seeds[order[k]]);
  }
  return out;
}

DatasetSplit take_per_class(const DatasetSplit& split, int per_class) {
  DatasetSplit out;
  out.split = split.split;
  out.contamination = split.contamination;
  out.seed = split.seed;
  std::map<int, int> taken;
  for (std::size_t i = 0; i < split.clips.size(); ++i) {
    const int label = split.clips[i].label.value_or(-1);
    if (taken[label]++ >= per_class) continue;
    out.clips.push_back(split.clips[i]);
    if (i < split.clip_seeds.size()) out.clip_seeds.push_back(split.clip_seeds[i]);
  }
  return out;
}

void write_split(const std::filesystem::path& dir, const DatasetSplit& split,
                 std::ostream& manifest) {
  const std::string name(to_string(split.split));
  std::filesystem::create_directories(dir / name);
  for (std::size_t i = 0; i < split.clips.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "clip_%05zu", i);
    const std::string rel = name + "/" + stem + ".wav";
    wav_write(dir / rel, split.clips[i]);
    nlohmann::json rec;
    rec["path"] = rel;
    rec["class_id"] = split.clips[i].label.value_or(-1);
    rec["split"] = name;
    rec["contamination"] = std::string(to_string(split.contamination));
    rec["seed"] = i < split.clip_seeds.size() ? split.clip_seeds[i] : 0;
    if (split.clips[i].clean_reference) {
      const std::string clean_rel = name + "/" + stem + "_clean.wav";
      AudioClip clean;
      clean.samples = *split.clips[i].clean_reference;
      wav_write(dir / clean_rel, clean);
      rec["clean_path"] = clean_rel;
    }
    manifest << rec.dump() << '\n';
  }
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw Error("cannot write " + (dir / "manifest.jsonl").string());
  write_split(dir, dataset.train, manifest);
  write_split(dir, dataset.valid, manifest);
  write_split(dir, dataset.test, manifest);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.jsonl";
  std::ifstream is(path);
  if (!is) throw MissingPrerequisite("dataset manifest not found: " + path.string());
  Dataset ds;
  ds.train.split = Split::train;
  ds.valid.split = Split::valid;
  ds.test.split = Split::test;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string split = rec.at("split").get<std::string>();
    DatasetSplit* target = split == "train"   ? &ds.train
                           : split == "valid" ? &ds.valid
                           : split == "test"  ? &ds.test
                                              : nullptr;
    if (target == nullptr) throw FormatError("unknown split '" + split + "' in manifest");
    AudioClip clip = wav_read(dir / rec.at("path").get<std::string>());
    clip.label = rec.at("class_id").get<int>();
    if (rec.contains("clean_path")) {
      clip.clean_reference = wav_read(dir / rec["clean_path"].get<std::string>()).samples;
    }
    target->contamination = parse_contamination(rec.at("contamination").get<std::string>());
    target->clips.push_back(std::move(clip));
    target->clip_seeds.push_back(rec.at("seed").get<std::uint64_t>());
  }
  if (ds.train.clips.empty()) throw FormatError("manifest has no training clips: " + path.string());
  return ds;
}

}  // namespace lmac
