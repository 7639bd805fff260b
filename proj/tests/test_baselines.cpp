#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lmac/baselines.hpp"
#include "lmac/error.hpp"
#include "lmac/ops.hpp"

using namespace lmac;
using lmac::testing::random_tensor;

namespace {

constexpr std::int64_t kRows = 3, kCols = 4, kItem = kRows * kCols;

struct LinearModel {
  Tensor w;  // [12, 2]
  Tensor b;

  explicit LinearModel(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    w = random_tensor({kItem, 2}, rng, -1.0, 1.0).cast<float>();
    b = random_tensor({2}, rng, -1.0, 1.0).cast<float>();
  }

  ModelFn fn() const {
    return [this](const Tensor& x) { return ModelOutput{linear(reshape(x, {x.dim(0), kItem}), w, b), {}}; };
  }
};

ClassifierArch tiny_arch() {
  ClassifierArch a;
  a.channels = {4, 4, 6, 6, 8, 8};
  return a;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("linear model: saliency is |w|, IG is w * x") {
    const LinearModel model(1);
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({kRows, kCols}, rng, -2.0, 2.0).cast<float>();
    for (int c : {0, 1}) {
      const Tensor s = saliency(model.fn(), x, c);
      const Tensor ig = integrated_gradients(model.fn(), x, c, {16});
      const Tensor sg = smoothgrad(model.fn(), x, c, {5, 0.3, 7}, 2);
      REQUIRE(s.shape() == x.shape());
      double total = 0.0;
      for (std::int64_t i = 0; i < kItem; ++i) {
        const float wi = model.w.at(i * 2 + c);
        CHECK(s.at(i) == doctest::Approx(std::abs(wi)));
        CHECK(sg.at(i) == doctest::Approx(std::abs(wi)).epsilon(1e-5));
        CHECK(ig.at(i) == doctest::Approx(wi * x.at(i)).epsilon(1e-5));
        total += ig.at(i);
      }
      // Completeness is exact for a linear model.
      NoGradGuard guard;
      const auto fx = model.fn()(reshape(x, {1, kRows, kCols})).logits.at(c);
      const auto f0 = model.fn()(Tensor::zeros({1, kRows, kCols})).logits.at(c);
      CHECK(total == doctest::Approx(fx - f0).epsilon(1e-5));
    }
    CHECK_THROWS_AS(saliency(model.fn(), x, 2), ConfigError);
  }

  TEST_CASE("quadratic model: left Riemann sum closed form") {
    std::mt19937_64 rng(3);
    const Tensor v = random_tensor({1, kRows, kCols}, rng, -1.0, 1.0).cast<float>();
    const ModelFn quad = [&v](const Tensor& x) {
      const Tensor sq = mul(mul(x, x), v);
      return ModelOutput{reshape(sum(sq), {1, 1}), {}};
    };
    const Tensor x = random_tensor({kRows, kCols}, rng, -2.0, 2.0).cast<float>();
    for (int n : {2, 8, 33}) {
      // Single-point batches keep sum() per item.
      const Tensor ig = integrated_gradients(quad, x, 0, {n}, {}, 1);
      for (std::int64_t i = 0; i < kItem; ++i) {
        const double expected = static_cast<double>(v.at(i)) * x.at(i) * x.at(i) * (n - 1.0) / n;
        CHECK(ig.at(i) == doctest::Approx(expected).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("smoothgrad with zero noise equals saliency") {
    const Classifier clf(tiny_arch(), 5);
    const ModelFn model = classifier_model(clf);
    std::mt19937_64 rng(6);
    const Tensor x = random_tensor({40, 64}, rng, -3.0, 1.0).cast<float>();
    const Tensor s = saliency(model, x, 3);
    const Tensor sg = smoothgrad(model, x, 3, {4, 0.0, 1}, 3);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(sg.at(i) == doctest::Approx(s.at(i)).epsilon(1e-4).scale(1e-6));

    const Tensor a = smoothgrad(model, x, 3, {6, 0.1, 9});
    const Tensor b = smoothgrad(model, x, 3, {6, 0.1, 9}, 4);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-4).scale(1e-6));
  }

  TEST_CASE("gradcam by hand on a two-channel activation") {
    std::mt19937_64 rng(8);
    const Tensor w = random_tensor({2 * kItem, 2}, rng, -1.0, 1.0).cast<float>();
    const Tensor bias = Tensor::zeros({2});
    const ModelFn model = [&](const Tensor& x) {
      const Tensor a = reshape(x, {x.dim(0), 1, kRows, kCols});
      const Tensor act = concat(std::vector<Tensor>{a, scale(a, -1.0f)}, 1);
      return ModelOutput{linear(reshape(act, {x.dim(0), 2 * kItem}), w, bias), act};
    };
    const Tensor x = random_tensor({kRows, kCols}, rng, -1.0, 1.0).cast<float>();
    for (int c : {0, 1}) {
      double a0 = 0.0, a1 = 0.0;
      for (std::int64_t i = 0; i < kItem; ++i) {
        a0 += w.at(i * 2 + c);
        a1 += w.at((kItem + i) * 2 + c);
      }
      a0 /= kItem;
      a1 /= kItem;
      std::vector<double> cam(kItem);
      double peak = 0.0;
      for (std::int64_t i = 0; i < kItem; ++i) {
        cam[i] = std::max(0.0, (a0 - a1) * x.at(i));
        peak = std::max(peak, cam[i]);
      }
      const Tensor g = gradcam(model, x, c);
      REQUIRE(g.shape() == x.shape());
      for (std::int64_t i = 0; i < kItem; ++i) {
        CHECK(g.at(i) == doctest::Approx(peak > 0 ? cam[i] / peak : 0.0).epsilon(1e-5).scale(1e-6));
      }
    }
  }

  TEST_CASE("classifier gradcam and registry") {
    const Classifier clf(tiny_arch(), 9);
    const MelFilterbank fb;
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor({40, 64}, rng, -3.0, 1.0).cast<float>();
    const Tensor g = gradcam(classifier_model(clf), x, 1);
    CHECK(g.shape() == x.shape());
    for (float v : g.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }

    MethodContext ctx;
    CHECK_THROWS_AS(make_method("saliency", ctx), ConfigError);
    ctx.classifier = &clf;
    ctx.fb = &fb;
    CHECK_THROWS_AS(make_method("lmac", ctx), MissingPrerequisite);
    CHECK_THROWS_AS(make_method("occlusion", ctx), ConfigError);
    ctx.baselines.ig.n_steps = 1;
    CHECK_THROWS_AS(make_method("ig", ctx), ConfigError);
    ctx.baselines.ig.n_steps = 8;
    for (const auto& name : method_names()) {
      if (name.rfind("lmac", 0) == 0) continue;
      CHECK_NOTHROW(make_method(name, ctx));
    }
  }

  TEST_CASE("random and all-ones methods on real clips") {
    DatasetConfig dc;
    dc.train_per_class = 1;
    dc.valid_per_class = 1;
    dc.test_per_class = 1;
    dc.seed = 4;
    const auto ds = build_dataset(dc);
    const MelFilterbank fb;
    const Classifier clf(tiny_arch(), 2);
    const auto items = prepare_eval_items(clf, fb, ds.test.clips);
    MethodContext ctx{&clf, nullptr, &fb, {}, MaskingDomain::stft, 3, -1.0};

    const auto r1 = make_method("random", ctx)(items);
    const auto r2 = make_method("random", ctx)(items);
    REQUIRE(r1.size() == items.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
      CHECK(r1[i].values.shape() == items[i].spec.magnitude.shape());
      CHECK(std::vector<float>(r1[i].values.data().begin(), r1[i].values.data().end()) ==
            std::vector<float>(r2[i].values.data().begin(), r2[i].values.data().end()));
    }
    for (auto domain : {MaskingDomain::stft, MaskingDomain::mel}) {
      ctx.domain = domain;
      const auto r = evaluate(clf, fb, items, make_method("all_ones", ctx), domain);
      CHECK(r.AI == 0.0);
      CHECK(r.AD == 0.0);
      CHECK(r.AG == 0.0);
      CHECK(r.Fid_In == 1.0);
      CHECK(r.MM == 1.0);
    }
  }
}
