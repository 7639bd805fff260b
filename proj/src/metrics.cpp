#include "lmac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"

namespace lmac {

namespace {

void require_items(std::size_t n, const char* what) {
  if (n == 0) throw ConfigError(std::string(what) + ": empty evaluation set");
}

Tensor apply_mask(const Tensor& x, const Tensor& m, bool complement) {
  if (x.shape() != m.shape()) {
    throw ShapeError("mask " + shape_str(m.shape()) + " does not match input " + shape_str(x.shape()));
  }
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  auto xd = x.data();
  auto md = m.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * (complement ? 1.0f - md[i] : md[i]);
  return Tensor(x.shape(), std::move(out));
}

double prob(const std::vector<double>& logits, int c) { return softmax(logits)[c]; }

double log_prob(const std::vector<double>& logits, int c) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  return logits[c] - mx - std::log(total);
}

}  // namespace

int ItemScores::target() const { return argmax(full); }

std::vector<ItemScores> score_items(const ScoreFn& f, std::span<const Tensor> inputs,
                                    std::span<const Tensor> masks) {
  require_items(inputs.size(), "score_items");
  if (inputs.size() != masks.size()) throw ShapeError("one mask per input required");
  std::vector<Tensor> batch;
  batch.reserve(3 * inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    batch.push_back(inputs[i]);
    batch.push_back(apply_mask(inputs[i], masks[i], false));
    batch.push_back(apply_mask(inputs[i], masks[i], true));
  }
  const auto rows = f(batch);
  if (rows.size() != batch.size()) throw ShapeError("score function returned wrong row count");
  std::vector<ItemScores> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out[i].full = rows[3 * i];
    out[i].in = rows[3 * i + 1];
    out[i].out = rows[3 * i + 2];
  }
  return out;
}

double faithfulness_ff(std::span<const ItemScores> scores, ScoreKind kind) {
  require_items(scores.size(), "FF");
  double total = 0.0;
  for (const auto& s : scores) {
    const int c = s.target();
    total += kind == ScoreKind::probability ? prob(s.full, c) - prob(s.out, c) : s.full[c] - s.out[c];
  }
  return total / static_cast<double>(scores.size());
}

double average_increase(std::span<const ItemScores> scores) {
  require_items(scores.size(), "AI");
  std::size_t hits = 0;
  for (const auto& s : scores) {
    const int c = s.target();
    if (prob(s.in, c) > prob(s.full, c)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
}

double average_drop(std::span<const ItemScores> scores, std::size_t* skipped) {
  require_items(scores.size(), "AD");
  double total = 0.0;
  std::size_t used = 0, skip = 0;
  for (const auto& s : scores) {
    const int c = s.target();
    const double p = prob(s.full, c);
    if (p == 0.0) {
      ++skip;
      continue;
    }
    total += std::max(0.0, p - prob(s.in, c)) / p;
    ++used;
  }
  if (skipped) *skipped = skip;
  if (skip > 0) std::cerr << "warning: AD skipped " << skip << " items with f(X)_c == 0\n";
  return used == 0 ? 0.0 : 100.0 * total / static_cast<double>(used);
}

double average_gain(std::span<const ItemScores> scores, std::size_t* skipped) {
  require_items(scores.size(), "AG");
  double total = 0.0;
  std::size_t used = 0, skip = 0;
  for (const auto& s : scores) {
    const int c = s.target();
    const double p = prob(s.full, c);
    if (p == 1.0) {
      ++skip;
      continue;
    }
    total += std::max(0.0, prob(s.in, c) - p) / (1.0 - p);
    ++used;
  }
  if (skipped) *skipped = skip;
  if (skip > 0) std::cerr << "warning: AG skipped " << skip << " items with f(X)_c == 1\n";
  return used == 0 ? 0.0 : 100.0 * total / static_cast<double>(used);
}

double fidelity_in(std::span<const ItemScores> scores) {
  require_items(scores.size(), "Fid-In");
  std::size_t same = 0;
  for (const auto& s : scores) {
    if (argmax(s.in) == s.target()) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(scores.size());
}

double faithfulness_ff(const ScoreFn& f, std::span<const Tensor> inputs,
                       std::span<const Tensor> masks, ScoreKind kind) {
  return faithfulness_ff(score_items(f, inputs, masks), kind);
}

double average_increase(const ScoreFn& f, std::span<const Tensor> inputs,
                        std::span<const Tensor> masks) {
  return average_increase(score_items(f, inputs, masks));
}

double average_drop(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks) {
  return average_drop(score_items(f, inputs, masks));
}

double average_gain(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks) {
  return average_gain(score_items(f, inputs, masks));
}

double fidelity_in(const ScoreFn& f, std::span<const Tensor> inputs, std::span<const Tensor> masks) {
  return fidelity_in(score_items(f, inputs, masks));
}

double sparseness(std::span<const float> attribution) {
  const std::size_t n = attribution.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(static_cast<double>(attribution[i]));
  std::sort(a.begin(), a.end());
  const double total = std::accumulate(a.begin(), a.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("sparseness of an all-zero attribution");
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0) * a[i];
  }
  return num / (static_cast<double>(n) * total);
}

double complexity(std::span<const float> attribution) {
  double total = 0.0;
  for (float v : attribution) total += std::abs(static_cast<double>(v));
  if (!(total > 0.0)) throw ConfigError("complexity of an all-zero attribution");
  double h = 0.0;
  for (float v : attribution) {
    const double p = std::abs(static_cast<double>(v)) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double mask_mean(std::span<const Tensor> masks) {
  require_items(masks.size(), "mask_mean");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& m : masks) {
    for (float v : m.data()) total += v;
    count += static_cast<std::size_t>(m.numel());
  }
  return total / static_cast<double>(count);
}

nlohmann::json MetricsReport::to_json() const {
  return {{"AI", AI},         {"AD", AD},
          {"AG", AG},         {"FF", FF},
          {"Fid_In", Fid_In}, {"SPS", SPS},
          {"COMP", COMP},     {"MM", MM},
          {"N", N},           {"ad_skipped", ad_skipped},
          {"ag_skipped", ag_skipped}, {"empty_maps", empty_maps}};
}

std::string MetricsReport::csv_header() { return "method,domain,AI,AD,AG,FF,Fid_In,SPS,COMP,MM,N"; }

std::string MetricsReport::csv_row(const std::string& method, const std::string& domain) const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%.4f,%.6f,%.4f,%.4f,%.4f,%.4f,%zu", method.c_str(),
                domain.c_str(), AI, AD, AG, FF, Fid_In, SPS, COMP, MM, N);
  return buf;
}

MetricsReport evaluate_masks(const ScoreFn& f, std::span<const Tensor> inputs,
                             std::span<const Tensor> masks, ScoreKind ff_kind) {
  const auto scores = score_items(f, inputs, masks);
  MetricsReport r;
  r.N = scores.size();
  r.AI = average_increase(scores);
  r.AD = average_drop(scores, &r.ad_skipped);
  r.AG = average_gain(scores, &r.ag_skipped);
  r.FF = faithfulness_ff(scores, ff_kind);
  r.Fid_In = fidelity_in(scores);
  r.MM = mask_mean(masks);
  double sps = 0.0, comp = 0.0;
  std::size_t used = 0;
  for (const auto& m : masks) {
    const bool empty = std::all_of(m.data().begin(), m.data().end(), [](float v) { return v == 0.0f; });
    if (empty) {
      ++r.empty_maps;
      continue;
    }
    sps += sparseness(m.data());
    comp += complexity(m.data());
    ++used;
  }
  if (used > 0) {
    r.SPS = sps / static_cast<double>(used);
    r.COMP = comp / static_cast<double>(used);
  }
  return r;
}

// Attributions and domains --------------------------------------------------

std::string_view to_string(MaskingDomain d) { return d == MaskingDomain::stft ? "stft" : "mel"; }

MaskingDomain parse_domain(std::string_view text) {
  if (text == "stft") return MaskingDomain::stft;
  if (text == "mel") return MaskingDomain::mel;
  throw ConfigError("unknown domain '" + std::string(text) + "' (expected stft or mel)");
}

Tensor max_normalize_abs(const Tensor& a) {
  float peak = 0.0f;
  for (float v : a.data()) peak = std::max(peak, std::abs(v));
  std::vector<float> out(static_cast<std::size_t>(a.numel()));
  auto d = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = peak > 0.0f ? std::abs(d[i]) / peak : 0.0f;
  return Tensor(a.shape(), std::move(out));
}

Tensor clip01(const Tensor& a) {
  std::vector<float> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return Tensor(a.shape(), std::move(out));
}

Tensor masking_map(const Attribution& a, MaskingDomain domain, const MelFilterbank& fb) {
  if (a.values.rank() != 2) throw ShapeError("attribution must be [bins, frames]");
  const std::int64_t expected = a.domain == MaskingDomain::stft ? fb.num_bins() : fb.num_mels();
  if (a.values.dim(0) != expected) {
    throw ShapeError("attribution with " + std::to_string(a.values.dim(0)) + " rows in the " +
                     std::string(to_string(a.domain)) + " domain");
  }
  const bool saliency = a.kind == AttributionKind::saliency;
  Tensor base = saliency ? max_normalize_abs(a.values) : clip01(a.values);
  if (a.domain == domain) return base;
  if (domain == MaskingDomain::stft) {
    // mel -> stft: transposed filterbank spread; saliency-style rescale.
    return max_normalize_abs(fb.lift(base));
  }
  return clip01(fb.project(base));
}

std::vector<EvalItem> prepare_eval_items(const Classifier& classifier, const MelFilterbank& fb,
                                         const std::vector<AudioClip>& clips,
                                         const StftParams& stft_params) {
  NoGradGuard guard;
  std::vector<EvalItem> items;
  items.reserve(clips.size());
  for (const auto& clip : clips) {
    EvalItem it;
    it.spec = stft(clip, stft_params);
    it.mel_energy = fb.mel_energy(it.spec.magnitude);
    it.log_mel = fb.log_compress(it.mel_energy);
    const auto out = classifier.forward(it.log_mel);
    it.predicted = out.predicted[0];
    it.probs = out.probs[0];
    items.push_back(std::move(it));
  }
  return items;
}

ScoreFn classifier_scores(const Classifier& classifier, const MelFilterbank& fb,
                          MaskingDomain domain, int batch_size) {
  return [&classifier, &fb, domain, batch_size](const std::vector<Tensor>& inputs) {
    NoGradGuard guard;
    std::vector<std::vector<double>> rows;
    rows.reserve(inputs.size());
    for (std::size_t start = 0; start < inputs.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(inputs.size(), start + static_cast<std::size_t>(batch_size));
      const Tensor x = make_batch(inputs, {}, start, end);
      const Tensor feats = domain == MaskingDomain::stft ? fb.log_mel(x) : fb.log_compress(x);
      const Tensor logits = classifier.logits(feats);
      const auto c = static_cast<std::size_t>(logits.dim(1));
      for (std::size_t b = 0; b < end - start; ++b) {
        auto row = logits.data().subspan(b * c, c);
        rows.emplace_back(row.begin(), row.end());
      }
    }
    return rows;
  };
}

Tensor domain_input(const EvalItem& item, MaskingDomain domain) {
  return domain == MaskingDomain::stft ? item.spec.magnitude : item.mel_energy;
}

MetricsReport evaluate(const Classifier& classifier, const MelFilterbank& fb,
                       const std::vector<EvalItem>& items, const AttributionMethod& method,
                       MaskingDomain domain, ScoreKind ff_kind) {
  require_items(items.size(), "evaluate");
  const auto attributions = method(items);
  if (attributions.size() != items.size()) throw ShapeError("one attribution per item required");
  std::vector<Tensor> inputs, masks;
  inputs.reserve(items.size());
  masks.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    inputs.push_back(domain_input(items[i], domain));
    masks.push_back(masking_map(attributions[i], domain, fb));
  }
  return evaluate_masks(classifier_scores(classifier, fb, domain), inputs, masks, ff_kind);
}

double masked_in_preferred_fraction(const Classifier& classifier, const MelFilterbank& fb,
                                    const std::vector<EvalItem>& items,
                                    const std::vector<Tensor>& masks) {
  require_items(items.size(), "masked_in_preferred_fraction");
  std::vector<Tensor> inputs;
  for (const auto& it : items) inputs.push_back(it.spec.magnitude);
  const auto scores = score_items(classifier_scores(classifier, fb, MaskingDomain::stft), inputs, masks);
  std::size_t hits = 0;
  for (const auto& s : scores) {
    const int c = s.target();
    if (-log_prob(s.in, c) < -log_prob(s.out, c)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace lmac
