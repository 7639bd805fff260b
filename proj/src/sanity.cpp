#include "lmac/sanity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmac/error.hpp"
#include "lmac/ops.hpp"

namespace lmac {

namespace {

constexpr int kWindow = 7;
constexpr double kC1 = 1e-4;  // (0.01 * L)^2, L = 1
constexpr double kC2 = 9e-4;  // (0.03 * L)^2

// Summed-area table with a zero first row and column.
std::vector<double> integral(const std::vector<double>& x, std::int64_t h, std::int64_t w) {
  std::vector<double> s(static_cast<std::size_t>((h + 1) * (w + 1)), 0.0);
  for (std::int64_t i = 0; i < h; ++i) {
    double row = 0.0;
    for (std::int64_t j = 0; j < w; ++j) {
      row += x[i * w + j];
      s[(i + 1) * (w + 1) + j + 1] = s[i * (w + 1) + j + 1] + row;
    }
  }
  return s;
}

double box(const std::vector<double>& s, std::int64_t w, std::int64_t i, std::int64_t j) {
  const std::int64_t stride = w + 1;
  return s[(i + kWindow) * stride + j + kWindow] - s[i * stride + j + kWindow] -
         s[(i + kWindow) * stride + j] + s[i * stride + j];
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.rank() != 2 || a.dim(0) < kWindow || a.dim(1) < kWindow) {
    throw ShapeError("ssim needs 2-D maps of at least 7x7, got " + shape_str(a.shape()));
  }
  const auto h = a.dim(0), w = a.dim(1);
  auto ad = a.data();
  auto bd = b.data();
  const auto [amin, amax] = std::minmax_element(ad.begin(), ad.end());
  const auto [bmin, bmax] = std::minmax_element(bd.begin(), bd.end());
  const double lo = std::min(*amin, *bmin);
  const double hi = std::max(*amax, *bmax);
  const double range = hi - lo;
  const std::size_t n = ad.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = range > 0.0 ? (ad[i] - lo) / range : 0.0;
    y[i] = range > 0.0 ? (bd[i] - lo) / range : 0.0;
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto sx = integral(x, h, w), sy = integral(y, h, w);
  const auto sxx = integral(xx, h, w), syy = integral(yy, h, w), sxy = integral(xy, h, w);
  const double count = kWindow * kWindow;
  double total = 0.0;
  std::int64_t windows = 0;
  for (std::int64_t i = 0; i + kWindow <= h; ++i) {
    for (std::int64_t j = 0; j + kWindow <= w; ++j) {
      const double mx = box(sx, w, i, j) / count;
      const double my = box(sy, w, i, j) / count;
      const double vx = std::max(0.0, box(sxx, w, i, j) / count - mx * mx);
      const double vy = std::max(0.0, box(syy, w, i, j) / count - my * my);
      const double cxy = box(sxy, w, i, j) / count - mx * my;
      total += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

// ROAR ------------------------------------------------------------------------

void RoarConfig::validate() const {
  if (percents.empty()) throw ConfigError("roar: empty percents");
  for (std::size_t i = 0; i < percents.size(); ++i) {
    if (!(percents[i] >= 0.0 && percents[i] <= 100.0)) throw ConfigError("roar: percents must be in [0, 100]");
    if (i > 0 && !(percents[i] > percents[i - 1])) throw ConfigError("roar: percents must increase strictly");
  }
  if (seeds.empty()) throw ConfigError("roar: at least one seed required");
  train.validate();
}

nlohmann::json RoarCurve::to_json() const {
  return {{"method", method}, {"percents", percents}, {"accuracy", accuracy},
          {"per_seed", per_seed}, {"seeds", seeds}};
}

Tensor ablate_top_percent(const Tensor& magnitude, const Tensor& attribution, double percent) {
  if (magnitude.shape() != attribution.shape()) {
    throw ShapeError("ablation map " + shape_str(attribution.shape()) + " vs magnitude " +
                     shape_str(magnitude.shape()));
  }
  const auto n = static_cast<std::size_t>(magnitude.numel());
  const auto k = static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(n)));
  std::vector<float> out(magnitude.data().begin(), magnitude.data().end());
  if (k == 0) return Tensor(magnitude.shape(), std::move(out));
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  auto a = attribution.data();
  const auto by_rank = [&a](std::uint32_t l, std::uint32_t r) { return a[l] > a[r] || (a[l] == a[r] && l < r); };
  if (k < n) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_rank);
  }
  for (std::size_t i = 0; i < std::min(k, n); ++i) out[idx[i]] = 0.0f;
  return Tensor(magnitude.shape(), std::move(out));
}

RoarSet make_roar_set(const std::vector<EvalItem>& items, const std::vector<int>& labels,
                      const AttributionMethod& method, const MelFilterbank& fb) {
  if (items.size() != labels.size()) throw ShapeError("one label per item required");
  RoarSet set;
  set.labels = labels;
  const auto attributions = method(items);
  for (std::size_t i = 0; i < items.size(); ++i) {
    set.magnitude.push_back(items[i].spec.magnitude);
    set.attribution.push_back(masking_map(attributions[i], MaskingDomain::stft, fb));
  }
  return set;
}

namespace {

LabeledFeatures ablated_features(const RoarSet& set, const MelFilterbank& fb, double percent) {
  NoGradGuard guard;
  LabeledFeatures out;
  out.labels = set.labels;
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.features.push_back(fb.log_mel(ablate_top_percent(set.magnitude[i], set.attribution[i], percent)));
  }
  return out;
}

}  // namespace

RoarCurve roar(const RoarSet& train, const RoarSet& test, const MelFilterbank& fb,
               const RoarConfig& config, const std::string& method,
               const std::vector<double>* baseline,
               const std::function<void(double, std::uint64_t, double)>& progress) {
  config.validate();
  if (train.size() == 0 || test.size() == 0) throw ConfigError("roar: empty train or test set");
  RoarCurve curve;
  curve.method = method;
  curve.percents = config.percents;
  curve.seeds = config.seeds;
  for (double p : config.percents) {
    std::vector<double> accs;
    if (p == 0.0 && baseline != nullptr && baseline->size() == config.seeds.size()) {
      accs = *baseline;
    } else {
      const LabeledFeatures tr = ablated_features(train, fb, p);
      const LabeledFeatures te = ablated_features(test, fb, p);
      for (std::uint64_t seed : config.seeds) {
        ClassifierTrainConfig tc = config.train;
        tc.seed = seed;
        const Classifier model = train_classifier(tr, tc);
        accs.push_back(accuracy(model, te));
        if (progress) progress(p, seed, accs.back());
      }
    }
    curve.accuracy.push_back(std::accumulate(accs.begin(), accs.end(), 0.0) /
                             static_cast<double>(accs.size()));
    curve.per_seed.push_back(std::move(accs));
  }
  return curve;
}

// Cascading randomization ---------------------------------------------------

nlohmann::json RandomizationTrace::to_json() const {
  return {{"method", method}, {"k_blocks", k_blocks}, {"ssim", ssim_to_original}};
}

RandomizationTrace cascading_randomization(const Classifier& classifier, const InterpretFn& interpret,
                                           std::uint64_t seed, const std::string& method) {
  RandomizationTrace trace;
  trace.method = method;
  const std::vector<Tensor> reference = interpret(classifier);
  if (reference.empty()) throw ConfigError("cascading_randomization: no items");
  for (int k = 0; k <= classifier.num_blocks() + 1; ++k) {
    Rng rng(seed);
    const Classifier randomized = randomize_from_top(classifier, k, rng);
    const std::vector<Tensor> maps = interpret(randomized);
    double total = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) total += ssim(maps[i], reference[i]);
    trace.k_blocks.push_back(k);
    trace.ssim_to_original.push_back(total / static_cast<double>(reference.size()));
    trace.snapshots.push_back(maps[0]);
  }
  return trace;
}

}  // namespace lmac
