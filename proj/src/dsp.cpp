#include "lmac/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"

namespace lmac {

void AudioClip::validate() const {
  if (sample_rate != kSampleRate) {
    throw ConfigError("sample rate must be " + std::to_string(kSampleRate) + " Hz");
  }
  for (float s : samples) {
    if (!(std::abs(s) <= 1.0f)) throw ConfigError("sample outside [-1, 1]");
  }
  if (clean_reference && clean_reference->size() != samples.size()) {
    throw ConfigError("clean reference length differs from clip length");
  }
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

namespace {

// Real-to-complex / complex-to-real plan pair for one transform size.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    real_ = fftw_alloc_real(static_cast<std::size_t>(n));
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    forward_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* real() { return real_; }
  fftw_complex* spectrum() { return spec_; }
  void forward() { fftw_execute(forward_); }
  // Unnormalized: the caller divides by n.
  void inverse() { fftw_execute(inverse_); }

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

std::mutex g_fft_mutex;

// Plans are cached per size; FFTW planning is not thread-safe, so lookups
// and executions are serialized.
RealFft& fft_for(int n) {
  static std::map<int, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

void check_params(const StftParams& p) {
  if (p.n_fft < 4 || p.n_fft % 2 != 0) throw ConfigError("n_fft must be even and >= 4");
  if (p.hop < 1 || p.n_fft % p.hop != 0 || p.n_fft / p.hop < 4) {
    throw ConfigError("STFT parameters are not COLA: hop must divide n_fft with n_fft/hop >= 4");
  }
}

}  // namespace

std::int64_t stft_frames(std::int64_t num_samples, const StftParams& params) {
  return 1 + num_samples / params.hop;
}

Spectrogram stft(std::span<const float> samples, const StftParams& params, int sample_rate) {
  check_params(params);
  const int n = params.n_fft;
  const int pad = n / 2;
  const auto len = static_cast<std::int64_t>(samples.size());
  if (len < n) {
    throw ConfigError("clip too short for STFT: " + std::to_string(len) + " < n_fft " +
                      std::to_string(n));
  }
  // Reflect padding (edge sample not repeated).
  std::vector<double> padded(static_cast<std::size_t>(len + 2 * pad));
  for (std::int64_t i = 0; i < len + 2 * pad; ++i) {
    std::int64_t j = i - pad;
    if (j < 0) j = -j;
    if (j >= len) j = 2 * (len - 1) - j;
    padded[i] = samples[j];
  }
  const auto window = hann_window(n);
  const std::int64_t frames = stft_frames(len, params);
  const std::int64_t bins = params.num_bins();
  std::vector<float> mag(static_cast<std::size_t>(bins * frames));
  std::vector<float> phase(mag.size());
  {
    std::lock_guard lock(g_fft_mutex);
    auto& fft = fft_for(n);
    for (std::int64_t t = 0; t < frames; ++t) {
      const double* src = padded.data() + t * params.hop;
      for (int i = 0; i < n; ++i) fft.real()[i] = src[i] * window[i];
      fft.forward();
      for (std::int64_t k = 0; k < bins; ++k) {
        const std::complex<double> c(fft.spectrum()[k][0], fft.spectrum()[k][1]);
        mag[k * frames + t] = static_cast<float>(std::abs(c));
        phase[k * frames + t] = static_cast<float>(std::arg(c));
      }
    }
  }
  Spectrogram spec;
  spec.magnitude = Tensor({bins, frames}, std::move(mag));
  spec.phase = Tensor({bins, frames}, std::move(phase));
  spec.params = params;
  spec.num_samples = len;
  spec.sample_rate = sample_rate;
  return spec;
}

Spectrogram stft(const AudioClip& clip, const StftParams& params) {
  return stft(clip.samples, params, clip.sample_rate);
}

AudioClip istft(const Spectrogram& spec) {
  const auto& params = spec.params;
  check_params(params);
  const int n = params.n_fft;
  const int pad = n / 2;
  const std::int64_t bins = spec.magnitude.dim(0), frames = spec.magnitude.dim(1);
  if (bins != params.num_bins() || spec.phase.shape() != spec.magnitude.shape()) {
    throw ShapeError("istft: spectrogram shape " + shape_str(spec.magnitude.shape()) +
                     " inconsistent with n_fft " + std::to_string(n));
  }
  const auto window = hann_window(n);
  const std::int64_t total = (frames - 1) * params.hop + n;
  std::vector<double> acc(static_cast<std::size_t>(total), 0.0);
  std::vector<double> env(acc.size(), 0.0);
  auto mag = spec.magnitude.data();
  auto ph = spec.phase.data();
  {
    std::lock_guard lock(g_fft_mutex);
    auto& fft = fft_for(n);
    for (std::int64_t t = 0; t < frames; ++t) {
      for (std::int64_t k = 0; k < bins; ++k) {
        const double m = mag[k * frames + t];
        const double p = ph[k * frames + t];
        fft.spectrum()[k][0] = m * std::cos(p);
        fft.spectrum()[k][1] = m * std::sin(p);
      }
      // A real signal has real DC and Nyquist bins.
      fft.spectrum()[0][1] = 0.0;
      fft.spectrum()[bins - 1][1] = 0.0;
      fft.inverse();
      double* dst = acc.data() + t * params.hop;
      double* e = env.data() + t * params.hop;
      for (int i = 0; i < n; ++i) {
        dst[i] += fft.real()[i] / n * window[i];
        e[i] += window[i] * window[i];
      }
    }
  }
  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.assign(static_cast<std::size_t>(spec.num_samples), 0.0f);
  for (std::int64_t i = 0; i < spec.num_samples; ++i) {
    const std::int64_t j = i + pad;
    if (j >= total) break;
    clip.samples[i] = env[j] > 1e-11 ? static_cast<float>(acc[j] / env[j]) : 0.0f;
  }
  return clip;
}

AudioClip synthesize_interpretation(const Tensor& mask, const Spectrogram& spec) {
  if (mask.shape() != spec.magnitude.shape()) {
    throw ShapeError("mask shape " + shape_str(mask.shape()) + " differs from spectrogram " +
                     shape_str(spec.magnitude.shape()));
  }
  for (float v : mask.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("mask values must lie in [0, 1]");
  }
  Spectrogram masked = spec;
  std::vector<float> mag(spec.magnitude.data().begin(), spec.magnitude.data().end());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] *= mask.data()[i];
  masked.magnitude = Tensor(spec.magnitude.shape(), std::move(mag));
  return istft(masked);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const MelParams& mel, const StftParams& stft_params, int sample_rate)
    : mel_(mel), bins_(stft_params.num_bins()) {
  if (mel.fmax > sample_rate / 2.0) throw ConfigError("fmax exceeds the Nyquist frequency");
  if (mel.fmin < 0 || mel.fmin >= mel.fmax) throw ConfigError("invalid mel frequency range");
  if (mel.n_mels < 1 || mel.n_mels >= bins_) throw ConfigError("n_mels must be in [1, F)");
  const double lo = hz_to_mel(mel.fmin), hi = hz_to_mel(mel.fmax);
  edges_hz_.resize(static_cast<std::size_t>(mel.n_mels + 2));
  for (int i = 0; i < mel.n_mels + 2; ++i) {
    edges_hz_[i] = mel_to_hz(lo + (hi - lo) * i / (mel.n_mels + 1));
  }
  std::vector<double> w(static_cast<std::size_t>(mel.n_mels * bins_), 0.0);
  for (int m = 0; m < mel.n_mels; ++m) {
    const double left = edges_hz_[m], center = edges_hz_[m + 1], right = edges_hz_[m + 2];
    for (std::int64_t k = 0; k < bins_; ++k) {
      const double f = static_cast<double>(k) * sample_rate / stft_params.n_fft;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      w[m * bins_ + k] = std::max(0.0, std::min(up, down));
    }
  }
  weights64_ = Tensor64({mel.n_mels, bins_}, w);
  weights_ = weights64_.cast<float>();
}

template <typename T>
BasicTensor<T> MelFilterbank::mel_energy(const BasicTensor<T>& magnitude) const {
  const int axis = magnitude.rank() - 2;
  if ((magnitude.rank() != 2 && magnitude.rank() != 3) || magnitude.dim(axis) != bins_) {
    throw ShapeError("mel filterbank expects [F,T] or [B,F,T] with F=" + std::to_string(bins_) +
                     ", got " + shape_str(magnitude.shape()));
  }
  const BasicTensor<T>* fb;
  if constexpr (std::is_same_v<T, float>) {
    fb = &weights_;
  } else {
    fb = &weights64_;
  }
  return matmul(*fb, mul(magnitude, magnitude));
}

template <typename T>
BasicTensor<T> MelFilterbank::log_compress(const BasicTensor<T>& energy) const {
  return log(shift(energy, static_cast<T>(mel_.log_floor)));
}

template <typename T>
BasicTensor<T> MelFilterbank::log_mel(const BasicTensor<T>& magnitude) const {
  return log_compress(mel_energy(magnitude));
}

template BasicTensor<float> MelFilterbank::mel_energy(const BasicTensor<float>&) const;
template BasicTensor<double> MelFilterbank::mel_energy(const BasicTensor<double>&) const;
template BasicTensor<float> MelFilterbank::log_mel(const BasicTensor<float>&) const;
template BasicTensor<double> MelFilterbank::log_mel(const BasicTensor<double>&) const;
template BasicTensor<float> MelFilterbank::log_compress(const BasicTensor<float>&) const;
template BasicTensor<double> MelFilterbank::log_compress(const BasicTensor<double>&) const;

Tensor MelFilterbank::lift(const Tensor& mel_map) const {
  if (mel_map.rank() != 2 || mel_map.dim(0) != mel_.n_mels) {
    throw ShapeError("lift expects [n_mels, T], got " + shape_str(mel_map.shape()));
  }
  const std::int64_t frames = mel_map.dim(1);
  std::vector<float> out(static_cast<std::size_t>(bins_ * frames));
  gemm<float>(true, false, bins_, frames, mel_.n_mels, 1.0f, weights_.data().data(),
              mel_map.data().data(), 0.0f, out.data());
  return Tensor({bins_, frames}, std::move(out));
}

Tensor MelFilterbank::project(const Tensor& linear_map) const {
  if (linear_map.rank() != 2 || linear_map.dim(0) != bins_) {
    throw ShapeError("project expects [F, T], got " + shape_str(linear_map.shape()));
  }
  const std::int64_t frames = linear_map.dim(1);
  std::vector<float> out(static_cast<std::size_t>(mel_.n_mels * frames));
  gemm<float>(false, false, mel_.n_mels, frames, bins_, 1.0f, weights_.data().data(),
              linear_map.data().data(), 0.0f, out.data());
  for (std::int64_t m = 0; m < mel_.n_mels; ++m) {
    double total = 0;
    for (std::int64_t k = 0; k < bins_; ++k) total += weights_.data()[m * bins_ + k];
    for (std::int64_t t = 0; t < frames; ++t) {
      out[m * frames + t] = static_cast<float>(out[m * frames + t] / total);
    }
  }
  return Tensor({mel_.n_mels, frames}, std::move(out));
}

MelFeatures mel_features(const Spectrogram& spec, const MelParams& params) {
  MelFilterbank fb(params, spec.params, spec.sample_rate);
  NoGradGuard no_grad;
  return {fb.log_mel(spec.magnitude.detach()), params};
}

double signal_power(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double s = 0;
  for (float v : samples) s += static_cast<double>(v) * v;
  return s / static_cast<double>(samples.size());
}

AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, double snr_db) {
  const std::size_t n = signal.samples.size();
  if (n == 0 || noise.samples.empty()) throw ConfigError("mix_at_snr: empty input");
  std::vector<double> looped(n);
  for (std::size_t i = 0; i < n; ++i) looped[i] = noise.samples[i % noise.samples.size()];
  const double ps = signal_power(signal.samples);
  double pn = 0;
  for (double v : looped) pn += v * v;
  pn /= static_cast<double>(n);
  if (ps <= 0.0) throw ConfigError("mix_at_snr: zero-power signal");
  if (pn <= 0.0) throw ConfigError("mix_at_snr: zero-power noise");
  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> mix(n);
  double peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mix[i] = signal.samples[i] + gain * looped[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double norm = peak > 1.0 ? 1.0 / peak : 1.0;
  AudioClip out;
  out.sample_rate = signal.sample_rate;
  out.label = signal.label;
  out.samples.resize(n);
  std::vector<float> clean(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(mix[i] * norm);
    clean[i] = static_cast<float>(signal.samples[i] * norm);
  }
  out.clean_reference = std::move(clean);
  return out;
}

std::vector<double> band_limit(std::span<const double> white, double lo_hz, double hi_hz,
                               int sample_rate) {
  const int n = static_cast<int>(white.size());
  if (n < 2) throw ConfigError("band_limit: signal too short");
  std::vector<double> out(white.begin(), white.end());
  std::vector<fftw_complex> spec(static_cast<std::size_t>(n / 2 + 1));
  std::lock_guard lock(g_fft_mutex);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(n, out.data(), spec.data(), FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(n, spec.data(), out.data(), FFTW_ESTIMATE);
  std::copy(white.begin(), white.end(), out.begin());
  fftw_execute(fwd);
  for (int k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * sample_rate / n;
    if (f < lo_hz || f > hi_hz) {
      spec[k][0] = 0.0;
      spec[k][1] = 0.0;
    }
  }
  fftw_execute(inv);
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  for (auto& v : out) v /= n;
  return out;
}

double measured_snr_db(std::span<const float> mixture, std::span<const float> clean) {
  if (mixture.size() != clean.size()) throw ShapeError("measured_snr_db: length mismatch");
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double c = clean[i];
    const double d = static_cast<double>(mixture[i]) - c;
    ps += c * c;
    pn += d * d;
  }
  if (pn <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

}  // namespace lmac
