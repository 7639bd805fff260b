#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lmac/dsp.hpp"
#include "lmac/error.hpp"
#include "lmac/synth.hpp"

using namespace lmac;

namespace {

std::int64_t argmax_bin(const Spectrogram& spec, std::int64_t t) {
  std::int64_t best = 0;
  for (std::int64_t f = 1; f < spec.bins(); ++f) {
    if (spec.magnitude.at(f * spec.frames() + t) > spec.magnitude.at(best * spec.frames() + t)) best = f;
  }
  return best;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

DatasetConfig small_config() {
  DatasetConfig c;
  c.train_per_class = 3;
  c.valid_per_class = 1;
  c.test_per_class = 2;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("class table covers all kinds") {
    const auto& classes = synth_classes();
    std::set<SynthKind> kinds;
    for (int c = 0; c < kNumClasses; ++c) {
      CHECK(classes[c].id == c);
      kinds.insert(classes[c].kind);
      CHECK_FALSE(synth_kind_name(classes[c].kind).empty());
    }
    CHECK(kinds.size() == 8);
  }

  TEST_CASE("pure tone at 1 kHz peaks at bin 32") {
    ClipRecipe r;
    r.kind = SynthKind::pure_tone;
    r.f0 = 1000.0;
    Rng rng(1);
    const auto spec = stft(render(r, rng));
    for (std::int64_t t = 4; t < spec.frames() - 4; ++t) CHECK(argmax_bin(spec, t) == 32);
  }

  TEST_CASE("up chirp has a strictly increasing spectral centroid") {
    ClipRecipe r;
    r.kind = SynthKind::up_chirp;
    r.f0 = 600.0;
    r.f1 = 3500.0;
    Rng rng(2);
    const auto spec = stft(render(r, rng));
    std::vector<double> centroid;
    for (std::int64_t t = 4; t < spec.frames() - 4; ++t) {
      double num = 0.0, den = 0.0;
      for (std::int64_t f = 0; f < spec.bins(); ++f) {
        const double m = spec.magnitude.at(f * spec.frames() + t);
        num += f * m;
        den += m;
      }
      centroid.push_back(num / den);
    }
    for (std::size_t i = 1; i < centroid.size(); ++i) CHECK(centroid[i] > centroid[i - 1]);
  }

  TEST_CASE("click train autocorrelation peaks at the click period") {
    for (double rate : {10.0, 25.0, 40.0}) {
      ClipRecipe r;
      r.kind = SynthKind::click_train;
      r.rate = rate;
      Rng rng(3);
      const auto x = render(r, rng);
      const int period = static_cast<int>(std::lround(kSampleRate / rate));
      int best = 0;
      double best_v = -1e300;
      for (int lag = period / 2; lag <= 3 * period / 2; ++lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + static_cast<std::size_t>(lag) < x.size(); ++i) s += static_cast<double>(x[i]) * x[i + lag];
        if (s > best_v) {
          best_v = s;
          best = lag;
        }
      }
      CHECK(best == period);
    }
  }

  TEST_CASE("generated clips are valid, labeled and amplitude-bounded") {
    Rng rng(5);
    for (int c = 0; c < kNumClasses; ++c) {
      for (int k = 0; k < 3; ++k) {
        const auto clip = generate_clip(c, rng);
        CHECK(clip.samples.size() == static_cast<std::size_t>(kClipSamples));
        REQUIRE(clip.label.has_value());
        CHECK(*clip.label == c);
        CHECK_NOTHROW(clip.validate());
        float peak = 0.0f;
        for (float v : clip.samples) peak = std::max(peak, std::abs(v));
        CHECK(peak >= 0.3f - 1e-4f);
        CHECK(peak <= 0.8f + 1e-4f);
      }
    }
  }

  TEST_CASE("build_dataset is deterministic and sized per class") {
    const auto cfg = small_config();
    const auto a = build_dataset(cfg);
    const auto b = build_dataset(cfg);
    CHECK(a.train.size() == 24);
    CHECK(a.valid.size() == 8);
    CHECK(a.test.size() == 16);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train.clips[i].samples == b.train.clips[i].samples);
      CHECK(*a.train.clips[i].label == static_cast<int>(i % 8));
    }
    // Splits draw from disjoint seed streams.
    std::set<std::uint64_t> seeds(a.train.clip_seeds.begin(), a.train.clip_seeds.end());
    for (auto s : a.test.clip_seeds) CHECK(seeds.count(s) == 0);
    DatasetConfig other = cfg;
    other.seed = 43;
    CHECK(build_dataset(other).train.clips[0].samples != a.train.clips[0].samples);

    DatasetConfig bad = cfg;
    bad.train_per_class = 0;
    CHECK_THROWS_AS(build_dataset(bad), ConfigError);
  }

  TEST_CASE("white-noise contamination hits the SNR and keeps the clean signal") {
    auto cfg = small_config();
    cfg.contamination = Contamination::white_noise;
    cfg.snr_db = 3.0;
    const auto ds = build_dataset(cfg);
    const auto clean = build_dataset(small_config());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      const auto& clip = ds.train.clips[i];
      REQUIRE(clip.clean_reference.has_value());
      CHECK(std::abs(measured_snr_db(clip.samples, *clip.clean_reference) - 3.0) < 0.01);
      CHECK(*clip.label == *clean.train.clips[i].label);
    }
  }

  TEST_CASE("class-mixture contamination keeps the primary label") {
    auto cfg = small_config();
    cfg.contamination = Contamination::class_mixture;
    const auto ds = build_dataset(cfg);
    const auto clean = build_dataset(small_config());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      const auto& clip = ds.train.clips[i];
      REQUIRE(clip.clean_reference.has_value());
      CHECK(*clip.label == *clean.train.clips[i].label);
      CHECK(clip.samples != *clip.clean_reference);
    }
  }

  TEST_CASE("ood mixtures pair distinct classes at 0 dB") {
    const auto ds = build_dataset(small_config());
    Rng rng(9);
    const auto ood = make_ood_mixtures(ds.test, rng);
    CHECK(ood.size() == ds.test.size() / 2);
    CHECK(ood.split == Split::ood);
    for (const auto& clip : ood.clips) {
      REQUIRE(clip.clean_reference.has_value());
      CHECK(std::abs(measured_snr_db(clip.samples, *clip.clean_reference)) < 0.01);
    }
    DatasetSplit single = take_per_class(ds.test, 2);
    single.clips.resize(1);
    CHECK_THROWS_AS(make_ood_mixtures(single, rng), ConfigError);
    DatasetSplit one_class;
    one_class.clips = {ds.test.clips[0], ds.test.clips[8]};
    CHECK_THROWS_AS(make_ood_mixtures(one_class, rng), ConfigError);
  }

  TEST_CASE("take_per_class keeps order and counts") {
    const auto ds = build_dataset(small_config());
    const auto sub = take_per_class(ds.train, 1);
    CHECK(sub.size() == 8);
    for (std::size_t i = 0; i < sub.size(); ++i) CHECK(sub.clips[i].samples == ds.train.clips[i].samples);
  }

  TEST_CASE("contamination parsing") {
    CHECK(parse_contamination("none") == Contamination::none);
    CHECK(parse_contamination("white") == Contamination::white_noise);
    CHECK(parse_contamination("mixture") == Contamination::class_mixture);
    CHECK_THROWS_AS(parse_contamination("pink"), ConfigError);
  }

  TEST_CASE("dataset written to disk reads back with byte-identical manifests") {
    auto cfg = small_config();
    cfg.contamination = Contamination::white_noise;
    const auto ds = build_dataset(cfg);
    const auto root = std::filesystem::temp_directory_path() / "lmac_test_synth";
    std::filesystem::remove_all(root);
    write_dataset(root / "a", ds);
    write_dataset(root / "b", build_dataset(cfg));
    CHECK(slurp(root / "a" / "manifest.jsonl") == slurp(root / "b" / "manifest.jsonl"));

    const auto back = read_dataset(root / "a");
    REQUIRE(back.train.size() == ds.train.size());
    CHECK(back.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      CHECK(*back.train.clips[i].label == *ds.train.clips[i].label);
      CHECK(back.train.clips[i].clean_reference.has_value());
      double err = 0.0;
      for (std::size_t j = 0; j < ds.train.clips[i].samples.size(); ++j) {
        err = std::max(err, std::abs(static_cast<double>(back.train.clips[i].samples[j]) - ds.train.clips[i].samples[j]));
      }
      CHECK(err <= std::ldexp(1.0, -15));
    }
    CHECK_THROWS_AS(read_dataset(root / "missing"), MissingPrerequisite);
    std::filesystem::remove_all(root);
  }
}
