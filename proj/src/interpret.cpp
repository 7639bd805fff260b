#include "lmac/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"
#include "lmac/optim.hpp"

namespace lmac {

namespace {

template <typename T>
BasicTensor<T> batched(const BasicTensor<T>& x) {
  return x.rank() == 2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
}

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(name) + " must be a finite value >= 0");
  }
}

}  // namespace

void MaskLossConfig::validate() const {
  require_nonnegative(lambda_in, "lambda_in");
  require_nonnegative(lambda_out, "lambda_out");
  require_nonnegative(lambda_s, "lambda_s");
  require_nonnegative(lambda_g, "lambda_g");
  if (!(cct >= 0.0 && cct <= 1.0)) throw ConfigError("cct must be in [0, 1]");
}

nlohmann::json MaskLossConfig::to_json() const {
  return {{"lambda_in", lambda_in},
          {"lambda_out", lambda_out},
          {"lambda_s", lambda_s},
          {"lambda_g", lambda_g},
          {"cct", cct},
          {"cap_out", cap_out}};
}

MaskLossConfig MaskLossConfig::from_json(const nlohmann::json& j, MaskLossConfig d) {
  d.lambda_in = j.value("lambda_in", d.lambda_in);
  d.lambda_out = j.value("lambda_out", d.lambda_out);
  d.lambda_s = j.value("lambda_s", d.lambda_s);
  d.lambda_g = j.value("lambda_g", d.lambda_g);
  d.cct = j.value("cct", d.cct);
  d.cap_out = j.value("cap_out", d.cap_out);
  return d;
}

template <typename T>
BasicTensor<T> regularizer(const BasicTensor<T>& mask, const BasicTensor<T>& magnitude,
                           const BasicTensor<T>& target, const MaskLossConfig& cfg,
                           std::span<const bool> guided) {
  const BasicTensor<T> m = batched(mask);
  BasicTensor<T> reg = scale(mean(abs(m)), static_cast<T>(cfg.lambda_s));
  const bool any_guided = std::any_of(guided.begin(), guided.end(), [](bool g) { return g; });
  if (cfg.lambda_g == 0.0 || !any_guided) return reg;

  const BasicTensor<T> x = batched(magnitude);
  const BasicTensor<T> xt = batched(target);
  if (x.shape() != m.shape() || xt.shape() != m.shape()) {
    throw ShapeError("regularizer: mask " + shape_str(m.shape()) + ", magnitude " +
                     shape_str(x.shape()) + " and target " + shape_str(xt.shape()) + " differ");
  }
  const auto batch = m.dim(0);
  if (static_cast<std::int64_t>(guided.size()) != batch) {
    throw ShapeError("regularizer: one guidance flag per item required");
  }
  const auto plane = m.numel() / batch;
  std::vector<T> w(static_cast<std::size_t>(m.numel()), T(0));
  const T unit = static_cast<T>(cfg.lambda_g / static_cast<double>(m.numel()));
  for (std::int64_t b = 0; b < batch; ++b) {
    if (guided[b]) std::fill_n(w.begin() + b * plane, plane, unit);
  }
  const BasicTensor<T> weights(m.shape(), std::move(w));
  const BasicTensor<T> guidance = sum(mul(abs(sub(mul(m, x), xt)), weights));
  return add(reg, guidance);
}

template <typename T>
BasicMaskLoss<T> masking_loss(const BasicClassifier<T>& classifier, const FeatureFn<T>& features_of,
                              const BasicTensor<T>& magnitude, const BasicTensor<T>& mask,
                              std::span<const int> y, const MaskLossConfig& cfg,
                              const BasicTensor<T>& target, std::span<const bool> guided) {
  cfg.validate();
  const BasicTensor<T> x = batched(magnitude);
  const BasicTensor<T> m = batched(mask);
  if (x.shape() != m.shape()) {
    throw ShapeError("masking_loss: mask " + shape_str(m.shape()) + " vs magnitude " +
                     shape_str(x.shape()));
  }
  const auto batch = x.dim(0);
  if (static_cast<std::int64_t>(y.size()) != batch) {
    throw ShapeError("masking_loss: one label per item required");
  }
  const BasicTensor<T> masked_in = mul(m, x);
  const BasicTensor<T> masked_out = mul(sub(BasicTensor<T>::scalar(T(1)), m), x);
  const BasicTensor<T> feats = features_of(concat(std::vector<BasicTensor<T>>{masked_in, masked_out}, 0));
  const BasicTensor<T> logp = log_softmax(classifier.logits(feats));

  std::vector<int> labels(y.begin(), y.end());
  labels.insert(labels.end(), y.begin(), y.end());
  const BasicTensor<T> picked = pick(logp, labels);  // [2B]
  std::vector<T> w_in(static_cast<std::size_t>(2 * batch), T(0));
  std::vector<T> w_out(static_cast<std::size_t>(2 * batch), T(0));
  std::fill_n(w_in.begin(), batch, static_cast<T>(-1.0 / static_cast<double>(batch)));
  const double cap = std::log(static_cast<double>(logp.dim(1)));
  double saturated = 0.0;
  for (std::int64_t b = 0; b < batch; ++b) {
    if (cfg.cap_out && -static_cast<double>(picked.at(batch + b)) >= cap) {
      saturated += cap / static_cast<double>(batch);
    } else {
      w_out[static_cast<std::size_t>(batch + b)] = static_cast<T>(-1.0 / static_cast<double>(batch));
    }
  }

  BasicMaskLoss<T> out;
  out.term_in = sum(mul(picked, BasicTensor<T>({2 * batch}, std::move(w_in))));
  out.term_out = shift(sum(mul(picked, BasicTensor<T>({2 * batch}, std::move(w_out)))),
                       static_cast<T>(saturated));
  out.reg = regularizer(m, x, target.defined() ? batched(target) : target, cfg, guided);
  out.total = add(sub(scale(out.term_in, static_cast<T>(cfg.lambda_in)),
                      scale(out.term_out, static_cast<T>(cfg.lambda_out))),
                  out.reg);
  return out;
}

template BasicTensor<float> regularizer(const Tensor&, const Tensor&, const Tensor&,
                                        const MaskLossConfig&, std::span<const bool>);
template BasicTensor<double> regularizer(const Tensor64&, const Tensor64&, const Tensor64&,
                                         const MaskLossConfig&, std::span<const bool>);
template BasicMaskLoss<float> masking_loss(const Classifier&, const FeatureFn<float>&, const Tensor&,
                                           const Tensor&, std::span<const int>,
                                           const MaskLossConfig&, const Tensor&,
                                           std::span<const bool>);
template BasicMaskLoss<double> masking_loss(const BasicClassifier<double>&, const FeatureFn<double>&,
                                            const Tensor64&, const Tensor64&, std::span<const int>,
                                            const MaskLossConfig&, const Tensor64&,
                                            std::span<const bool>);

Tensor binarize_at_median(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("binarize_at_median of an empty tensor");
  std::vector<float> v(x.data().begin(), x.data().end());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  float median = *mid;
  if (v.size() % 2 == 0) median = 0.5f * (median + *std::max_element(v.begin(), mid));
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  std::transform(x.data().begin(), x.data().end(), out.begin(),
                 [median](float a) { return a > median ? 1.0f : 0.0f; });
  return Tensor(x.shape(), std::move(out));
}

double mask_target_similarity(const Tensor& mask, const Tensor& target) {
  if (mask.shape() != target.shape()) {
    throw ShapeError("mask " + shape_str(mask.shape()) + " vs target " + shape_str(target.shape()));
  }
  const Tensor bin = binarize_at_median(target);
  double dot = 0.0, nm = 0.0, nb = 0.0;
  auto m = mask.data();
  auto b = bin.data();
  for (std::size_t i = 0; i < m.size(); ++i) {
    dot += static_cast<double>(m[i]) * b[i];
    nm += static_cast<double>(m[i]) * m[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (nm == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(nm) * std::sqrt(nb));
}

bool cct_gate(const Tensor& mask, const Tensor& target, double cct) {
  return mask_target_similarity(mask, target) >= cct;
}

void InterpreterTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  loss.validate();
}

nlohmann::json InterpreterEpochLog::to_json() const {
  return {{"epoch", epoch},       {"mean_loss", mean_loss}, {"term_in", term_in},
          {"term_out", term_out}, {"reg", reg},             {"mask_mean", mask_mean},
          {"gated_fraction", gated_fraction}};
}

InterpreterData prepare_interpreter_data(const Classifier& classifier, const MelFilterbank& fb,
                                         const std::vector<AudioClip>& clips,
                                         const StftParams& stft_params) {
  if (clips.empty()) throw ConfigError("interpreter training needs at least one clip");
  NoGradGuard guard;
  InterpreterData d;
  d.latents.resize(static_cast<std::size_t>(classifier.arch().num_latents));
  for (const auto& clip : clips) {
    const Spectrogram spec = stft(clip, stft_params);
    if (d.frames == 0) d.frames = spec.frames();
    if (spec.frames() != d.frames) throw ShapeError("interpreter training clips differ in length");
    const auto out = classifier.forward(fb.log_mel(spec.magnitude));
    d.magnitude.push_back(spec.magnitude);
    if (clip.clean_reference) {
      d.target.push_back(stft(std::span<const float>(*clip.clean_reference), stft_params).magnitude);
    } else {
      d.target.push_back(spec.magnitude);
    }
    d.predicted.push_back(out.predicted[0]);
    for (std::size_t l = 0; l < out.latents.size(); ++l) d.latents[l].push_back(select(out.latents[l], 0));
  }
  return d;
}

namespace {

Decoder run_training(const Classifier& classifier, const Decoder& init, const MelFilterbank& fb,
                     const InterpreterData& data, const InterpreterTrainConfig& config,
                     bool guided, const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw ConfigError("interpreter training needs at least one clip");
  Classifier frozen = classifier.clone();
  frozen.set_trainable(false);
  Decoder decoder = init.clone();
  decoder.set_trainable(true);
  Adam opt(decoder.parameters(), {config.lr});
  const FeatureFn<float> features_of = log_mel_features<float>(fb);

  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(child_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1));
    std::shuffle(order.begin(), order.end(), rng);
    InterpreterEpochLog log;
    log.epoch = epoch;
    std::size_t gated = 0;
    double mask_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto n = static_cast<double>(end - start);
      std::vector<Tensor> latents;
      for (const auto& level : data.latents) latents.push_back(make_batch(level, order, start, end));
      const Tensor x = make_batch(data.magnitude, order, start, end);
      std::vector<int> y;
      for (std::size_t i = start; i < end; ++i) y.push_back(data.predicted[order[i]]);

      opt.zero_grad();
      const Tensor mask = decoder.forward(latents, data.frames);
      Tensor target;
      const std::size_t count = end - start;
      std::unique_ptr<bool[]> flags(new bool[count]());
      if (guided) {
        target = make_batch(data.target, order, start, end);
        for (std::size_t i = 0; i < count; ++i) {
          flags[i] = cct_gate(select(mask, static_cast<std::int64_t>(i)), data.target[order[start + i]],
                              config.loss.cct);
          gated += flags[i] ? 1 : 0;
        }
      }
      const auto loss = masking_loss<float>(frozen, features_of, x, mask, y, config.loss, target,
                                            std::span<const bool>(flags.get(), count));
      if (!std::isfinite(loss.total.item())) throw NumericError("interpreter loss is not finite");
      loss.total.backward();
      opt.step();

      log.mean_loss += loss.total.item() * n;
      log.term_in += loss.term_in.item() * n;
      log.term_out += loss.term_out.item() * n;
      log.reg += loss.reg.item() * n;
      for (float v : mask.data()) mask_sum += v;
    }
    const auto total = static_cast<double>(order.size());
    log.mean_loss /= total;
    log.term_in /= total;
    log.term_out /= total;
    log.reg /= total;
    log.mask_mean = mask_sum / (total * static_cast<double>(data.magnitude[0].numel()));
    log.gated_fraction = static_cast<double>(gated) / total;
    if (on_epoch) on_epoch(log);
  }
  decoder.set_trainable(false);
  return decoder;
}

}  // namespace

Decoder train_interpreter(const Classifier& classifier, const Decoder& decoder,
                          const MelFilterbank& fb, const InterpreterData& data,
                          const InterpreterTrainConfig& config, const EpochCallback& on_epoch) {
  if (config.loss.lambda_g != 0.0) {
    throw ConfigError("train_interpreter: lambda_g must be 0 in the first stage");
  }
  return run_training(classifier, decoder, fb, data, config, false, on_epoch);
}

Decoder finetune_interpreter(const Classifier& classifier, const Decoder& decoder,
                             const MelFilterbank& fb, const InterpreterData& data,
                             const InterpreterTrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(classifier, decoder, fb, data, config, config.loss.lambda_g > 0.0, on_epoch);
}

std::vector<Tensor> predict_masks(const Classifier& classifier, const Decoder& decoder,
                                  const MelFilterbank& fb, const std::vector<Tensor>& magnitudes,
                                  int batch_size) {
  NoGradGuard guard;
  std::vector<Tensor> out;
  out.reserve(magnitudes.size());
  for (std::size_t start = 0; start < magnitudes.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(magnitudes.size(), start + static_cast<std::size_t>(batch_size));
    const Tensor x = make_batch(magnitudes, {}, start, end);
    const auto cls = classifier.forward(fb.log_mel(x));
    const Tensor masks = decoder.forward(cls.latents, x.dim(2));
    for (std::size_t i = start; i < end; ++i) out.push_back(select(masks, static_cast<std::int64_t>(i - start)));
  }
  return out;
}

}  // namespace lmac
