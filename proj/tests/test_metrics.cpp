#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lmac/error.hpp"
#include "lmac/metrics.hpp"
#include "metric_fixture.hpp"

using namespace lmac;
using namespace lmac::testing;

TEST_SUITE("metrics") {
  TEST_CASE("four-item fixture matches brute force") {
    const auto f = metric_fixture();
    const auto o = oracle_metrics(f);
    const auto r = evaluate_masks(fixture_scorer(), f.inputs, f.masks);
    CHECK(r.N == 4);
    CHECK(r.empty_maps == 1);
    CHECK(std::abs(r.FF - static_cast<double>(o.FF)) < 1e-6);
    CHECK(std::abs(r.AI - static_cast<double>(o.AI)) < 1e-6);
    CHECK(std::abs(r.AD - static_cast<double>(o.AD)) < 1e-6);
    CHECK(std::abs(r.AG - static_cast<double>(o.AG)) < 1e-6);
    CHECK(std::abs(r.Fid_In - static_cast<double>(o.Fid_In)) < 1e-6);
    CHECK(std::abs(r.SPS - static_cast<double>(o.SPS)) < 1e-6);
    CHECK(std::abs(r.COMP - static_cast<double>(o.COMP)) < 1e-6);
    CHECK(std::abs(r.MM - static_cast<double>(o.MM)) < 1e-6);
    // The fixture exercises both sides of every threshold.
    CHECK(o.AI > 0);
    CHECK(o.AI < 100);
    CHECK(o.AD > 0);
    CHECK(o.AG > 0);
  }

  TEST_CASE("all-ones masks give the identity row") {
    const auto f = metric_fixture();
    std::vector<Tensor> ones(4, Tensor::full({2, 3}, 1.0f));
    const auto r = evaluate_masks(fixture_scorer(), f.inputs, ones);
    CHECK(r.AI == 0.0);
    CHECK(r.AD == 0.0);
    CHECK(r.AG == 0.0);
    CHECK(r.Fid_In == 1.0);
    CHECK(r.MM == 1.0);
    CHECK(r.SPS == doctest::Approx(0.0));
    CHECK(r.COMP == doctest::Approx(std::log(6.0)));
  }

  TEST_CASE("zero masks: no gain, positive drop, and an adversarial Fid-In") {
    const auto f = metric_fixture();
    std::vector<Tensor> zeros(4, Tensor::zeros({2, 3}));
    const auto scores = score_items(fixture_scorer(), f.inputs, zeros);
    // f(0) = softmax(-0.5, 0) always prefers class 1, so class-0 items lose it.
    int class0 = 0;
    for (const auto& s : scores) class0 += s.target() == 0 ? 1 : 0;
    REQUIRE(class0 > 0);
    CHECK(fidelity_in(scores) == doctest::Approx((4.0 - class0) / 4.0));
    const auto r = evaluate_masks(fixture_scorer(), f.inputs, zeros);
    CHECK(r.empty_maps == 4);
    CHECK(r.SPS == 0.0);
    CHECK(r.MM == 0.0);
  }

  TEST_CASE("increase, strict decrease and ties partition the items") {
    std::mt19937_64 rng(3);
    const auto f = metric_fixture();
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> masks;
      for (int i = 0; i < 4; ++i) masks.push_back(random_tensor({2, 3}, rng, 0.0, 1.0).cast<float>());
      if (trial % 5 == 0) masks[0] = Tensor::full({2, 3}, 1.0f);
      const auto scores = score_items(fixture_scorer(), f.inputs, masks);
      int inc = 0, dec = 0, tie = 0;
      for (const auto& s : scores) {
        const int c = s.target();
        const double p = softmax(s.full)[c], q = softmax(s.in)[c];
        (q > p ? inc : q < p ? dec : tie) += 1;
      }
      CHECK(inc + dec + tie == 4);
      CHECK(average_increase(scores) == doctest::Approx(25.0 * inc));
      const auto r = evaluate_masks(fixture_scorer(), f.inputs, masks);
      CHECK(r.AI >= 0.0);
      CHECK(r.AI <= 100.0);
      CHECK(r.AD >= 0.0);
      CHECK(r.AD <= 100.0);
      CHECK(r.AG >= 0.0);
      CHECK(r.AG <= 100.0);
      CHECK(r.SPS >= 0.0);
      CHECK(r.SPS <= 1.0);
      CHECK(r.COMP >= 0.0);
    }
  }

  TEST_CASE("sparseness and complexity closed forms") {
    for (int n : {1, 2, 7, 100}) {
      std::vector<float> one_hot(static_cast<std::size_t>(n), 0.0f);
      one_hot[static_cast<std::size_t>(n / 2)] = 3.0f;
      CHECK(sparseness(one_hot) == doctest::Approx((n - 1.0) / n));
      CHECK(complexity(one_hot) == doctest::Approx(0.0));
      std::vector<float> flat(static_cast<std::size_t>(n), -0.4f);
      CHECK(sparseness(flat) == doctest::Approx(0.0));
      CHECK(complexity(flat) == doctest::Approx(std::log(static_cast<double>(n))));
    }
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor a = random_tensor({5, 9}, rng, -1.0, 1.0).cast<float>();
      CHECK(sparseness(a.data()) == doctest::Approx(static_cast<double>(oracle_gini(a))).epsilon(1e-9));
      CHECK(complexity(a.data()) == doctest::Approx(static_cast<double>(oracle_entropy(a))).epsilon(1e-9));
    }
    const std::vector<float> zero(4, 0.0f);
    CHECK_THROWS_AS(sparseness(zero), ConfigError);
    CHECK_THROWS_AS(complexity(zero), ConfigError);
  }

  TEST_CASE("probability and logit FF") {
    const auto f = metric_fixture();
    const auto scores = score_items(fixture_scorer(), f.inputs, f.masks);
    double expected = 0.0;
    for (const auto& s : scores) expected += s.full[s.target()] - s.out[s.target()];
    CHECK(faithfulness_ff(scores, ScoreKind::logit) == doctest::Approx(expected / 4.0));
  }

  TEST_CASE("argument errors") {
    const auto f = metric_fixture();
    const std::vector<Tensor> none;
    CHECK_THROWS_AS(evaluate_masks(fixture_scorer(), none, none), ConfigError);
    std::vector<Tensor> wrong(4, Tensor::full({3, 2}, 1.0f));
    CHECK_THROWS_AS(evaluate_masks(fixture_scorer(), f.inputs, wrong), ShapeError);
    std::vector<Tensor> short_list(3, Tensor::full({2, 3}, 1.0f));
    CHECK_THROWS_AS(evaluate_masks(fixture_scorer(), f.inputs, short_list), ShapeError);
  }

  TEST_CASE("attribution to masking map") {
    const MelFilterbank fb;
    Tensor sal({fb.num_bins(), 3}, std::vector<float>(static_cast<std::size_t>(fb.num_bins()) * 3, 0.0f));
    sal.mutable_data()[4] = -2.0f;
    sal.mutable_data()[10] = 1.0f;
    const Tensor m = masking_map({sal, MaskingDomain::stft, AttributionKind::saliency}, MaskingDomain::stft, fb);
    CHECK(m.at(4) == 1.0f);
    CHECK(m.at(10) == 0.5f);
    CHECK(m.at(0) == 0.0f);

    Tensor mask({fb.num_bins(), 2}, std::vector<float>(static_cast<std::size_t>(fb.num_bins()) * 2, 1.7f));
    mask.mutable_data()[0] = -0.3f;
    const Tensor c = masking_map({mask, MaskingDomain::stft, AttributionKind::mask}, MaskingDomain::stft, fb);
    CHECK(c.at(0) == 0.0f);
    CHECK(c.at(1) == 1.0f);

    const Tensor mel = Tensor::full({fb.num_mels(), 4}, 0.5f);
    const Tensor lifted = masking_map({mel, MaskingDomain::mel, AttributionKind::mask}, MaskingDomain::stft, fb);
    CHECK(lifted.shape() == Shape{fb.num_bins(), 4});
    float peak = 0.0f;
    for (float v : lifted.data()) {
      CHECK(v >= 0.0f);
      peak = std::max(peak, v);
    }
    CHECK(peak == doctest::Approx(1.0f));
    const Tensor projected =
        masking_map({Tensor::full({fb.num_bins(), 4}, 1.0f), MaskingDomain::stft, AttributionKind::mask},
                    MaskingDomain::mel, fb);
    CHECK(projected.shape() == Shape{fb.num_mels(), 4});
    CHECK_THROWS_AS(masking_map({mel, MaskingDomain::stft, AttributionKind::mask}, MaskingDomain::stft, fb),
                    ShapeError);
  }

  TEST_CASE("domain parsing and report formatting") {
    CHECK(parse_domain("stft") == MaskingDomain::stft);
    CHECK(parse_domain("mel") == MaskingDomain::mel);
    CHECK_THROWS_AS(parse_domain("cqt"), ConfigError);
    MetricsReport r;
    r.AI = 12.5;
    r.N = 3;
    CHECK(MetricsReport::csv_header().rfind("method,domain,AI", 0) == 0);
    CHECK(r.csv_row("lmac", "stft").rfind("lmac,stft,12.5000", 0) == 0);
    CHECK(r.to_json().at("N") == 3);
  }
}
