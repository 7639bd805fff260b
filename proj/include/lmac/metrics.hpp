#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmac/dsp.hpp"
#include "lmac/models.hpp"

namespace lmac {

/// Batch scorer: one logit row per input, inputs given in the masking domain.
using ScoreFn = std::function<std::vector<std::vector<double>>(const std::vector<Tensor>& inputs)>;

enum class ScoreKind { probability, logit };

/// Logits of one item on the full input, the masked-in input X*M and the
/// masked-out input X*(1-M).
struct ItemScores {
  std::vector<double> full;
  std::vector<double> in;
  std::vector<double> out;

  int target() const;
};

std::vector<ItemScores> score_items(const ScoreFn& f, std::span<const Tensor> inputs,
                                    std::span<const Tensor> masks);

double faithfulness_ff(std::span<const ItemScores> scores, ScoreKind kind = ScoreKind::probability);
double average_increase(std::span<const ItemScores> scores);
/// Items with f(X)_c == 0 are skipped; `skipped` receives their count.
double average_drop(std::span<const ItemScores> scores, std::size_t* skipped = nullptr);
/// Items with f(X)_c == 1 are skipped; `skipped` receives their count.
double average_gain(std::span<const ItemScores> scores, std::size_t* skipped = nullptr);
double fidelity_in(std::span<const ItemScores> scores);

double faithfulness_ff(const ScoreFn& f, std::span<const Tensor> inputs,
                       std::span<const Tensor> masks, ScoreKind kind = ScoreKind::probability);
double average_increase(const ScoreFn& f, std::span<const Tensor> inputs,
                        std::span<const Tensor> masks);
double average_drop(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks);
double average_gain(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks);
double fidelity_in(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks);

/// Gini index of |a|.
double sparseness(std::span<const float> attribution);
/// Shannon entropy (nats) of |a| / sum |a|.
double complexity(std::span<const float> attribution);
double mask_mean(std::span<const Tensor> masks);

struct MetricsReport {
  double AI = 0.0;
  double AD = 0.0;
  double AG = 0.0;
  double FF = 0.0;
  double Fid_In = 0.0;
  double SPS = 0.0;
  double COMP = 0.0;
  double MM = 0.0;
  std::size_t N = 0;
  std::size_t ad_skipped = 0;
  std::size_t ag_skipped = 0;
  std::size_t empty_maps = 0;  // all-zero maps left out of SPS/COMP

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row(const std::string& method, const std::string& domain) const;
};

/// All metrics for masking maps `masks` (values in [0,1]) over `inputs`.
MetricsReport evaluate_masks(const ScoreFn& f, std::span<const Tensor> inputs,
                             std::span<const Tensor> masks, ScoreKind ff_kind = ScoreKind::probability);

// Attributions and domains --------------------------------------------------

enum class MaskingDomain { stft, mel };
enum class AttributionKind { mask, saliency };

std::string_view to_string(MaskingDomain d);
MaskingDomain parse_domain(std::string_view text);

struct Attribution {
  Tensor values;  // [F, T] for stft, [n_mels, T] for mel
  MaskingDomain domain = MaskingDomain::stft;
  AttributionKind kind = AttributionKind::mask;
};

/// |a| / max |a| (zero map stays zero).
Tensor max_normalize_abs(const Tensor& a);
Tensor clip01(const Tensor& a);

/// Converts an attribution into a [0,1] masking map in `domain`. Saliency
/// maps take |.| and are max-normalized; masks are clipped. Mel maps are
/// lifted with the transposed filterbank, STFT maps projected with its
/// row-normalized form.
Tensor masking_map(const Attribution& a, MaskingDomain domain, const MelFilterbank& fb);

/// Cached per-clip analysis shared by all methods under evaluation.
struct EvalItem {
  Spectrogram spec;
  Tensor mel_energy;  // [n_mels, T]
  Tensor log_mel;     // [n_mels, T]
  int predicted = 0;
  std::vector<double> probs;
};

std::vector<EvalItem> prepare_eval_items(const Classifier& classifier, const MelFilterbank& fb,
                                         const std::vector<AudioClip>& clips,
                                         const StftParams& stft = {});

/// The model's logits on masking-domain inputs: linear magnitudes for stft,
/// mel energies for mel.
ScoreFn classifier_scores(const Classifier& classifier, const MelFilterbank& fb,
                          MaskingDomain domain, int batch_size = 32);

Tensor domain_input(const EvalItem& item, MaskingDomain domain);

using AttributionMethod = std::function<std::vector<Attribution>(const std::vector<EvalItem>&)>;

MetricsReport evaluate(const Classifier& classifier, const MelFilterbank& fb,
                       const std::vector<EvalItem>& items, const AttributionMethod& method,
                       MaskingDomain domain, ScoreKind ff_kind = ScoreKind::probability);

/// Cross-entropy of the predicted class on masked-in and masked-out inputs
/// (stft domain); returns the fraction of items with CE_in < CE_out.
double masked_in_preferred_fraction(const Classifier& classifier, const MelFilterbank& fb,
                                    const std::vector<EvalItem>& items,
                                    const std::vector<Tensor>& masks);

}  // namespace lmac
