#include "lmac/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lmac/error.hpp"
#include "lmac/interpret.hpp"
#include "lmac/ops.hpp"

namespace lmac {

namespace {

Tensor with_batch(const Tensor& x) {
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return Tensor(std::move(s), std::vector<float>(x.data().begin(), x.data().end()));
}

void check_class(const Tensor& logits, int c) {
  if (logits.rank() != 2) throw ShapeError("model must return [B, C] logits");
  if (c < 0 || c >= logits.dim(1)) throw ConfigError("target class out of range");
}

/// Sum over rows of `points` gradients, scaled by `weight`, accumulated
/// into `acc` (size of one item).
void accumulate_rows(const Tensor& grads, std::vector<double>& acc, double weight, bool absolute) {
  const auto n = static_cast<std::size_t>(grads.dim(0));
  const std::size_t item = acc.size();
  auto g = grads.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < item; ++i) {
      const double v = g[b * item + i];
      acc[i] += weight * (absolute ? std::abs(v) : v);
    }
  }
}

Tensor from_double(const Shape& shape, const std::vector<double>& v) {
  return Tensor(shape, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

ModelFn classifier_model(const Classifier& classifier) {
  return [&classifier](const Tensor& features) {
    auto out = classifier.forward(features);
    return ModelOutput{out.logits, out.latents.back()};
  };
}

void BaselineConfig::validate() const {
  if (smoothgrad.n_samples < 1) throw ConfigError("smoothgrad n_samples must be >= 1");
  if (!(smoothgrad.sigma_fraction >= 0.0)) throw ConfigError("smoothgrad sigma must be >= 0");
  if (ig.n_steps < 2) throw ConfigError("integrated gradients n_steps must be >= 2");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"smoothgrad",
           {{"n_samples", smoothgrad.n_samples},
            {"sigma_fraction", smoothgrad.sigma_fraction},
            {"seed", smoothgrad.seed}}},
          {"ig", {{"n_steps", ig.n_steps}}},
          {"batch_size", batch_size}};
}

Tensor input_gradients(const ModelFn& model, const Tensor& points, int c) {
  Tensor x = points.detach();
  x.set_requires_grad(true);
  const ModelOutput out = model(x);
  check_class(out.logits, c);
  const auto n = static_cast<std::size_t>(out.logits.dim(0));
  const std::vector<int> targets(n, c);
  sum(pick(out.logits, targets)).backward();
  if (!x.has_grad()) return Tensor::zeros(x.shape());
  return Tensor(x.shape(), std::vector<float>(x.grad().begin(), x.grad().end()));
}

Tensor saliency(const ModelFn& model, const Tensor& features, int c) {
  const Tensor g = input_gradients(model, with_batch(features), c);
  std::vector<float> out(g.data().begin(), g.data().end());
  for (auto& v : out) v = std::abs(v);
  return Tensor(features.shape(), std::move(out));
}

Tensor smoothgrad(const ModelFn& model, const Tensor& features, int c, const SmoothGradConfig& cfg,
                  int batch_size) {
  if (cfg.n_samples < 1) throw ConfigError("smoothgrad n_samples must be >= 1");
  const auto [lo, hi] = std::minmax_element(features.data().begin(), features.data().end());
  const double sigma = cfg.sigma_fraction * (static_cast<double>(*hi) - *lo);
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto item = static_cast<std::size_t>(features.numel());
  std::vector<double> acc(item, 0.0);
  for (int start = 0; start < cfg.n_samples; start += batch_size) {
    const int count = std::min(batch_size, cfg.n_samples - start);
    std::vector<float> pts(static_cast<std::size_t>(count) * item);
    for (int b = 0; b < count; ++b) {
      for (std::size_t i = 0; i < item; ++i) {
        pts[b * item + i] = static_cast<float>(features.data()[i] + sigma * noise(rng));
      }
    }
    Shape s = features.shape();
    s.insert(s.begin(), count);
    const Tensor g = input_gradients(model, Tensor(std::move(s), std::move(pts)), c);
    accumulate_rows(g, acc, 1.0 / cfg.n_samples, true);
  }
  return from_double(features.shape(), acc);
}

Tensor integrated_gradients(const ModelFn& model, const Tensor& features, int c, const IgConfig& cfg,
                            const Tensor& baseline, int batch_size) {
  if (cfg.n_steps < 2) throw ConfigError("integrated gradients n_steps must be >= 2");
  const Tensor base = baseline.defined() ? baseline : Tensor::zeros(features.shape());
  if (base.shape() != features.shape()) throw ShapeError("IG baseline shape mismatch");
  const auto item = static_cast<std::size_t>(features.numel());
  auto x = features.data();
  auto x0 = base.data();
  std::vector<double> acc(item, 0.0);
  for (int start = 0; start < cfg.n_steps; start += batch_size) {
    const int count = std::min(batch_size, cfg.n_steps - start);
    std::vector<float> pts(static_cast<std::size_t>(count) * item);
    for (int b = 0; b < count; ++b) {
      const double alpha = static_cast<double>(start + b) / cfg.n_steps;
      for (std::size_t i = 0; i < item; ++i) {
        pts[b * item + i] = static_cast<float>(x0[i] + alpha * (static_cast<double>(x[i]) - x0[i]));
      }
    }
    Shape s = features.shape();
    s.insert(s.begin(), count);
    const Tensor g = input_gradients(model, Tensor(std::move(s), std::move(pts)), c);
    accumulate_rows(g, acc, 1.0 / cfg.n_steps, false);
  }
  for (std::size_t i = 0; i < item; ++i) acc[i] *= static_cast<double>(x[i]) - x0[i];
  return from_double(features.shape(), acc);
}

Tensor gradcam(const ModelFn& model, const Tensor& features, int c) {
  if (features.rank() != 2) throw ShapeError("gradcam expects [rows, frames] features");
  Tensor x = with_batch(features);
  x.set_requires_grad(true);
  const ModelOutput out = model(x);
  check_class(out.logits, c);
  Tensor act = out.activation;
  if (!act.defined() || act.rank() != 4) throw ShapeError("gradcam needs a [B,K,H,W] activation");
  const auto k = act.dim(1), h = act.dim(2), w = act.dim(3);
  std::vector<float> alpha(static_cast<std::size_t>(k), 0.0f);
  if (act.requires_grad()) {
    act.retain_grad();
    const std::vector<int> target{c};
    pick(out.logits, target).backward();
    if (act.has_grad()) {
      auto g = act.grad();
      for (std::int64_t ch = 0; ch < k; ++ch) {
        double s = 0.0;
        for (std::int64_t i = 0; i < h * w; ++i) s += g[ch * h * w + i];
        alpha[ch] = static_cast<float>(s / static_cast<double>(h * w));
      }
    }
  }
  std::vector<float> cam(static_cast<std::size_t>(h * w), 0.0f);
  auto a = act.data();
  for (std::int64_t ch = 0; ch < k; ++ch) {
    for (std::int64_t i = 0; i < h * w; ++i) cam[i] += alpha[ch] * a[ch * h * w + i];
  }
  for (auto& v : cam) v = std::max(v, 0.0f);
  NoGradGuard guard;
  const Tensor up = resize_bilinear(Tensor({1, 1, h, w}, std::move(cam)), features.dim(0), features.dim(1));
  return max_normalize_abs(reshape(up, features.shape()));
}

// Method registry -------------------------------------------------------------

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"lmac",       "lmac_hard", "saliency", "smoothgrad",
                                              "ig",         "gradcam",   "random",   "all_ones"};
  return names;
}

AttributionMethod make_method(const std::string& name, const MethodContext& ctx) {
  if (ctx.classifier == nullptr || ctx.fb == nullptr) {
    throw ConfigError("method '" + name + "' needs a classifier and filterbank");
  }
  ctx.baselines.validate();
  const Classifier& clf = *ctx.classifier;
  const MelFilterbank& fb = *ctx.fb;

  if (name == "lmac" || name == "lmac_hard") {
    if (ctx.decoder == nullptr) throw MissingPrerequisite("decoder checkpoint required for " + name);
    const double threshold = name == "lmac_hard" ? (ctx.hard_threshold >= 0 ? ctx.hard_threshold : 0.5)
                                                 : ctx.hard_threshold;
    const Decoder* dec = ctx.decoder;
    return [&clf, &fb, dec, threshold](const std::vector<EvalItem>& items) {
      std::vector<Tensor> mags;
      for (const auto& it : items) mags.push_back(it.spec.magnitude);
      auto masks = predict_masks(clf, *dec, fb, mags);
      std::vector<Attribution> out;
      for (auto& m : masks) {
        if (threshold >= 0.0) {
          std::vector<float> v(m.data().begin(), m.data().end());
          for (auto& x : v) x = x > threshold ? 1.0f : 0.0f;
          m = Tensor(m.shape(), std::move(v));
        }
        out.push_back({m, MaskingDomain::stft, AttributionKind::mask});
      }
      return out;
    };
  }

  using ItemFn = std::function<Tensor(const ModelFn&, const EvalItem&)>;
  ItemFn per_item;
  const BaselineConfig cfg = ctx.baselines;
  if (name == "saliency") {
    per_item = [](const ModelFn& m, const EvalItem& it) { return saliency(m, it.log_mel, it.predicted); };
  } else if (name == "smoothgrad") {
    per_item = [cfg](const ModelFn& m, const EvalItem& it) {
      return smoothgrad(m, it.log_mel, it.predicted, cfg.smoothgrad, cfg.batch_size);
    };
  } else if (name == "ig") {
    per_item = [cfg](const ModelFn& m, const EvalItem& it) {
      return integrated_gradients(m, it.log_mel, it.predicted, cfg.ig, {}, cfg.batch_size);
    };
  } else if (name == "gradcam") {
    per_item = [](const ModelFn& m, const EvalItem& it) { return gradcam(m, it.log_mel, it.predicted); };
  }
  if (per_item) {
    return [&clf, per_item](const std::vector<EvalItem>& items) {
      const ModelFn model = classifier_model(clf);
      std::vector<Attribution> out;
      for (const auto& it : items) out.push_back({per_item(model, it), MaskingDomain::mel, AttributionKind::saliency});
      return out;
    };
  }

  const MaskingDomain domain = ctx.domain;
  if (name == "random") {
    const std::uint64_t seed = ctx.seed;
    return [domain, seed](const std::vector<EvalItem>& items) {
      std::vector<Attribution> out;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const Tensor& ref = domain_input(items[i], domain);
        Rng rng(child_seed(seed, i));
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        std::vector<float> v(static_cast<std::size_t>(ref.numel()));
        for (auto& x : v) x = u(rng);
        out.push_back({Tensor(ref.shape(), std::move(v)), domain, AttributionKind::mask});
      }
      return out;
    };
  }
  if (name == "all_ones") {
    return [domain](const std::vector<EvalItem>& items) {
      std::vector<Attribution> out;
      for (const auto& it : items) {
        out.push_back({Tensor::full(domain_input(it, domain).shape(), 1.0f), domain, AttributionKind::mask});
      }
      return out;
    };
  }
  throw ConfigError("unknown attribution method '" + name + "'");
}

}  // namespace lmac
