#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lmac/tensor.hpp"

namespace lmac {

inline constexpr int kSampleRate = 16000;

/// Labeled mono waveform. `clean_reference` holds the pre-contamination
/// signal of a mixture, aligned sample-for-sample with `samples`.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::optional<int> label;
  std::optional<std::vector<float>> clean_reference;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  /// Throws ConfigError when an invariant (|x| <= 1, 16 kHz, aligned
  /// reference) is violated.
  void validate() const;
};

enum class WindowKind { hann };

struct StftParams {
  int n_fft = 512;
  int hop = 128;
  WindowKind window = WindowKind::hann;

  int num_bins() const { return n_fft / 2 + 1; }
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

/// Magnitude/phase decomposition of a centered STFT.
struct Spectrogram {
  Tensor magnitude;  // [F, T], nonnegative
  Tensor phase;      // [F, T], radians
  StftParams params;
  std::int64_t num_samples = 0;  // length of the analysed waveform
  int sample_rate = kSampleRate;

  std::int64_t bins() const { return magnitude.dim(0); }
  std::int64_t frames() const { return magnitude.dim(1); }
};

/// Number of STFT frames for a waveform of `num_samples` samples.
std::int64_t stft_frames(std::int64_t num_samples, const StftParams& params = {});

Spectrogram stft(std::span<const float> samples, const StftParams& params = {},
                 int sample_rate = kSampleRate);
Spectrogram stft(const AudioClip& clip, const StftParams& params = {});

/// Overlap-add inverse with window-squared normalization; output length is
/// `spec.num_samples`.
AudioClip istft(const Spectrogram& spec);

/// Inverts (mask * magnitude) with the spectrogram's own phase.
AudioClip synthesize_interpretation(const Tensor& mask, const Spectrogram& spec);

struct MelParams {
  int n_mels = 40;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-scale filterbank mapping STFT bins to mel bands.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelParams& mel = {}, const StftParams& stft = {},
                         int sample_rate = kSampleRate);

  const MelParams& params() const { return mel_; }
  std::int64_t num_mels() const { return mel_.n_mels; }
  std::int64_t num_bins() const { return bins_; }
  /// [n_mels, F] filter weights.
  const Tensor& weights() const { return weights_; }
  /// Center, lower and upper edge frequencies (Hz) of each filter.
  const std::vector<double>& edges_hz() const { return edges_hz_; }

  /// weights . magnitude^2 for magnitude [F,T] or [B,F,T] (differentiable).
  template <typename T>
  BasicTensor<T> mel_energy(const BasicTensor<T>& magnitude) const;
  /// log(mel_energy + floor).
  template <typename T>
  BasicTensor<T> log_mel(const BasicTensor<T>& magnitude) const;
  /// log(energy + floor) for an already-computed mel energy.
  template <typename T>
  BasicTensor<T> log_compress(const BasicTensor<T>& energy) const;

  /// Transposed application: [n_mels, T] map -> [F, T].
  Tensor lift(const Tensor& mel_map) const;
  /// Row-normalized application: [F, T] map -> [n_mels, T] weighted average.
  Tensor project(const Tensor& linear_map) const;

 private:
  MelParams mel_;
  std::int64_t bins_;
  Tensor weights_;
  Tensor64 weights64_;
  std::vector<double> edges_hz_;
};

struct MelFeatures {
  Tensor values;  // [n_mels, T], log-compressed
  MelParams params;
};

MelFeatures mel_features(const Spectrogram& spec, const MelParams& params = {});

/// Reads 16-bit PCM mono 16 kHz RIFF/WAVE.
AudioClip wav_read(const std::filesystem::path& path);
/// Writes 16-bit PCM mono. Out-of-range samples saturate with a warning.
void wav_write(const std::filesystem::path& path, const AudioClip& clip);

double signal_power(std::span<const float> samples);

/// Mixes `noise` (looped or truncated to length) into `signal` at `snr_db`.
/// The mixture is peak-normalized when it would clip; the returned
/// clean_reference is the signal under the same gain.
AudioClip mix_at_snr(const AudioClip& signal, const AudioClip& noise, double snr_db);

/// Zeroes every DFT component of `white` outside [lo_hz, hi_hz] and
/// returns the inverse transform.
std::vector<double> band_limit(std::span<const double> white, double lo_hz, double hi_hz,
                               int sample_rate = kSampleRate);

/// 10 log10(P(clean) / P(mix - clean)).
double measured_snr_db(std::span<const float> mixture, std::span<const float> clean);

}  // namespace lmac
