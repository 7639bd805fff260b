#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "lmac/dsp.hpp"
#include "lmac/error.hpp"
#include "lmac/ops.hpp"

using namespace lmac;

namespace {

std::vector<float> random_clip(std::size_t n, std::uint64_t seed, float amp = 0.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-amp, amp);
  std::vector<float> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

std::vector<float> sine(double hz, std::size_t n, double amp = 0.5) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate));
  }
  return x;
}

double ncc(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lmac_test_" + name);
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("stft shape and pure sine peak") {
    const auto spec = stft(sine(1000.0, 32000), {});
    CHECK(spec.bins() == 257);
    CHECK(spec.frames() == 251);
    CHECK(stft_frames(32000) == 251);
    for (std::int64_t t = 4; t < spec.frames() - 4; ++t) {
      std::int64_t best = 0;
      for (std::int64_t f = 1; f < spec.bins(); ++f) {
        if (spec.magnitude.at(f * spec.frames() + t) > spec.magnitude.at(best * spec.frames() + t)) best = f;
      }
      CHECK(best == 32);
    }
  }

  TEST_CASE("stft of silence and of a DC offset") {
    const auto zero = stft(std::vector<float>(4000, 0.0f));
    for (float v : zero.magnitude.data()) CHECK(v == 0.0f);
    const auto dc = stft(std::vector<float>(4000, 0.25f));
    const auto t = dc.frames() / 2;
    // The Hann window leaks DC into bin 1 only.
    const double bin0 = dc.magnitude.at(t), bin1 = dc.magnitude.at(dc.frames() + t);
    double rest = 0.0;
    for (std::int64_t f = 2; f < dc.bins(); ++f) rest += dc.magnitude.at(f * dc.frames() + t);
    CHECK(bin0 > bin1);
    CHECK(rest < 1e-3 * bin0);
  }

  TEST_CASE("stft rejects short clips and non-COLA parameters") {
    CHECK_THROWS_AS(stft(std::vector<float>(100, 0.0f)), ConfigError);
    StftParams bad;
    bad.hop = 300;
    CHECK_THROWS_AS(stft(std::vector<float>(4000, 0.0f), bad), ConfigError);
  }

  TEST_CASE("istft round trip, zero and linearity") {
    const auto x = random_clip(16000, 3);
    const auto spec = stft(x);
    const auto y = istft(spec);
    REQUIRE(y.samples.size() == x.size());
    double err = 0.0;
    for (std::size_t i = 256; i + 256 < x.size(); ++i) err = std::max(err, std::abs(static_cast<double>(x[i]) - y.samples[i]));
    CHECK(err < 1e-5);

    Spectrogram silent = spec;
    silent.magnitude = Tensor::zeros(spec.magnitude.shape());
    for (float v : istft(silent).samples) CHECK(v == 0.0f);

    Spectrogram doubled = spec;
    doubled.magnitude = scale(spec.magnitude, 2.0f);
    const auto z = istft(doubled);
    double lin = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) lin = std::max(lin, std::abs(z.samples[i] - 2.0 * y.samples[i]));
    CHECK(lin < 1e-5);
  }

  TEST_CASE("parseval: STFT energy tracks waveform energy") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto x = random_clip(16000, seed);
      // Silent edges keep reflect padding from adding energy.
      std::fill_n(x.begin(), 512, 0.0f);
      std::fill_n(x.end() - 512, 512, 0.0f);
      const auto spec = stft(x);
      double e_spec = 0.0;
      for (std::int64_t f = 0; f < spec.bins(); ++f) {
        const double w = (f == 0 || f == spec.bins() - 1) ? 1.0 : 2.0;
        for (std::int64_t t = 0; t < spec.frames(); ++t) {
          const double m = spec.magnitude.at(f * spec.frames() + t);
          e_spec += w * m * m;
        }
      }
      double e_wave = 0.0;
      for (float v : x) e_wave += static_cast<double>(v) * v;
      // Hann^2 overlap at hop n/4 sums to 1.5; DFT Parseval adds a factor n.
      const double expected = 1.5 * 512.0 * e_wave;
      CHECK(std::abs(e_spec / expected - 1.0) < 0.01);
    }
  }

  TEST_CASE("synthesize_interpretation identities") {
    const auto x = sine(440.0, 16000);
    const auto spec = stft(x);
    const auto ones = synthesize_interpretation(Tensor::full(spec.magnitude.shape(), 1.0f), spec);
    const auto ref = istft(spec);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(ones.samples[i] == ref.samples[i]);
    const auto none = synthesize_interpretation(Tensor::zeros(spec.magnitude.shape()), spec);
    for (float v : none.samples) CHECK(v == 0.0f);
    CHECK_THROWS_AS(synthesize_interpretation(Tensor::zeros({3, 3}), spec), ShapeError);
  }

  TEST_CASE("single-row mask on a pure sine reconstructs the sine") {
    const auto x = sine(1000.0, 16000);
    const auto spec = stft(x);
    std::vector<float> m(static_cast<std::size_t>(spec.magnitude.numel()), 0.0f);
    for (std::int64_t t = 0; t < spec.frames(); ++t) m[32 * spec.frames() + t] = 1.0f;
    const auto y = synthesize_interpretation(Tensor(spec.magnitude.shape(), m), spec);
    CHECK(ncc(x, y.samples) > 0.95);
  }

  TEST_CASE("mel filterbank construction") {
    MelFilterbank fb;
    CHECK(fb.num_mels() == 40);
    CHECK(fb.num_bins() == 257);
    const auto& w = fb.weights();
    for (std::int64_t m = 0; m < 40; ++m) {
      double row = 0.0;
      for (std::int64_t f = 0; f < 257; ++f) row += w.at(m * 257 + f);
      CHECK(row > 0.0);
    }
    // Adjacent filters overlap by half: filter m's centre is m+1's lower edge.
    const auto& e = fb.edges_hz();
    REQUIRE(e.size() == 42);
    for (std::size_t m = 1; m < e.size(); ++m) CHECK(e[m] > e[m - 1]);
    CHECK(e.front() == doctest::Approx(0.0));
    CHECK(e.back() == doctest::Approx(8000.0));
    CHECK(hz_to_mel(mel_to_hz(1234.5)) == doctest::Approx(1234.5));

    MelParams bad;
    bad.fmax = 9000.0;
    CHECK_THROWS_AS(MelFilterbank{bad}, ConfigError);
  }

  TEST_CASE("flat magnitude gives mel energies ordered by filter width") {
    MelFilterbank fb;
    const auto energy = fb.mel_energy(Tensor::full({257, 1}, 1.0f));
    const auto& e = fb.edges_hz();
    const double bin_hz = kSampleRate / 512.0;
    for (std::int64_t m = 1; m < 40; ++m) {
      const double width = e[static_cast<std::size_t>(m) + 2] - e[static_cast<std::size_t>(m)];
      const double prev = e[static_cast<std::size_t>(m) + 1] - e[static_cast<std::size_t>(m) - 1];
      // Triangle area in bins is half the support; discretization costs at
      // most one bin of slack.
      CHECK(std::abs(energy.at(m) - width / bin_hz / 2.0) <= 1.0);
      if (width > prev + 2.0 * bin_hz) CHECK(energy.at(m) > energy.at(m - 1));
    }
  }

  TEST_CASE("mel features: floor and monotonicity") {
    const Spectrogram silent{Tensor::zeros({257, 10}), Tensor::zeros({257, 10}), {}, 1152};
    const auto floor = mel_features(silent);
    for (float v : floor.values.data()) CHECK(v == doctest::Approx(std::log(1e-10)));

    const auto spec = stft(random_clip(8000, 9));
    std::vector<float> bigger(spec.magnitude.data().begin(), spec.magnitude.data().end());
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.0f, 0.5f);
    for (auto& v : bigger) v += u(rng);
    Spectrogram more = spec;
    more.magnitude = Tensor(spec.magnitude.shape(), bigger);
    const auto fa = mel_features(spec), fb = mel_features(more);
    const auto a = fa.values.data();
    const auto b = fb.values.data();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i]);
  }

  TEST_CASE("mel lift is the adjoint of the filterbank") {
    MelFilterbank fb;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> lin(257 * 6), mel(40 * 6);
    for (auto& v : lin) v = u(rng);
    for (auto& v : mel) v = u(rng);
    const Tensor x({257, 6}, lin), y({40, 6}, mel);
    const Tensor wx = matmul(fb.weights(), x);
    const Tensor lifted = fb.lift(y);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < mel.size(); ++i) lhs += static_cast<double>(wx.at(static_cast<std::int64_t>(i))) * mel[i];
    for (std::size_t i = 0; i < lin.size(); ++i) rhs += static_cast<double>(lifted.at(static_cast<std::int64_t>(i))) * lin[i];
    CHECK(std::abs(lhs - rhs) < 1e-4 * std::abs(lhs));
  }

  TEST_CASE("wav round trip and format errors") {
    AudioClip clip;
    clip.samples = random_clip(1600, 11, 0.9f);
    const auto path = temp_path("rt.wav");
    wav_write(path, clip);
    const auto back = wav_read(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    double err = 0.0;
    for (std::size_t i = 0; i < clip.samples.size(); ++i) err = std::max(err, std::abs(static_cast<double>(back.samples[i]) - clip.samples[i]));
    CHECK(err <= std::ldexp(1.0, -15));

    clip.samples.assign(100, 0.0f);
    wav_write(path, clip);
    for (float v : wav_read(path).samples) CHECK(v == 0.0f);

    // Hand-written stereo header.
    const auto stereo = temp_path("stereo.wav");
    {
      std::ofstream os(stereo, std::ios::binary);
      const auto u32 = [&os](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
      const auto u16 = [&os](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
      os.write("RIFF", 4); u32(36 + 8); os.write("WAVE", 4);
      os.write("fmt ", 4); u32(16); u16(1); u16(2); u32(16000); u32(64000); u16(4); u16(16);
      os.write("data", 4); u32(8); u32(0); u32(0);
    }
    try {
      wav_read(stereo);
      FAIL("stereo file accepted");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("unsupported channel count") != std::string::npos);
    }
    CHECK_THROWS_AS(wav_read(temp_path("does_not_exist.wav")), MissingPrerequisite);
    std::filesystem::remove(path);
    std::filesystem::remove(stereo);
  }

  TEST_CASE("mix_at_snr hits the requested SNR") {
    AudioClip s, n;
    s.samples = sine(700.0, 16000, 0.3);
    n.samples = random_clip(12000, 2, 0.5f);
    for (double snr = -10.0; snr <= 40.0; snr += 2.5) {
      const auto mix = mix_at_snr(s, n, snr);
      REQUIRE(mix.clean_reference.has_value());
      CHECK(std::abs(measured_snr_db(mix.samples, *mix.clean_reference) - snr) < 0.01);
      for (float v : mix.samples) CHECK(std::abs(v) <= 1.0f);
    }
    const auto m0 = mix_at_snr(s, n, 0.0);
    const auto& c = *m0.clean_reference;
    std::vector<float> resid(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) resid[i] = m0.samples[i] - c[i];
    CHECK(std::abs(10.0 * std::log10(signal_power(c) / signal_power(resid))) < 0.01);

    const auto m60 = mix_at_snr(s, n, 60.0);
    double dev = 0.0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) dev = std::max(dev, std::abs(static_cast<double>(m60.samples[i]) - s.samples[i]));
    CHECK(dev < 1e-2);

    AudioClip silent;
    silent.samples.assign(100, 0.0f);
    CHECK_THROWS_AS(mix_at_snr(silent, n, 3.0), ConfigError);
  }
}
