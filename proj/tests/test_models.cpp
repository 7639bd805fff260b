#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "lmac/error.hpp"
#include "lmac/models.hpp"
#include "lmac/ops.hpp"

using namespace lmac;
using lmac::testing::random_tensor;

namespace {

Tensor random_features(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor(std::move(shape), rng, -3.0, 3.0).cast<float>();
}

std::vector<float> copy(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("classifier forward contract") {
    const Classifier model({}, 1);
    CHECK(model.parameter_count() < 1'000'000);
    CHECK(model.num_blocks() == 6);
    const Tensor x = random_features({40, 251}, 2);
    const auto a = model.forward(x);
    const auto b = model.forward(x);
    CHECK(copy(a.logits) == copy(b.logits));
    REQUIRE(a.logits.shape() == Shape{1, 8});
    double total = 0.0;
    for (double p : a.probs[0]) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    CHECK(a.predicted[0] == argmax(a.probs[0]));
    REQUIRE(a.latents.size() == 4);
    const std::int64_t widths[] = {251 / 8, 251 / 16, 251 / 32, 251 / 64};
    for (int i = 0; i < 4; ++i) CHECK(a.latents[static_cast<std::size_t>(i)].dim(3) == widths[i]);
    CHECK_THROWS_AS(model.forward(random_features({40, 32}, 3)), ShapeError);
    CHECK_THROWS_AS(model.forward(random_features({39, 100}, 3)), ShapeError);
  }

  TEST_CASE("batched forward matches per-item forward") {
    const Classifier model({}, 4);
    const Tensor batch = random_features({3, 40, 80}, 5);
    const auto out = model.forward(batch);
    for (std::int64_t i = 0; i < 3; ++i) {
      const auto single = model.forward(select(batch, i));
      for (int c = 0; c < 8; ++c) CHECK(single.logits.at(c) == doctest::Approx(out.logits.at(i * 8 + c)).epsilon(1e-5));
    }
  }

  TEST_CASE("decoder output shape and range") {
    const Classifier clf({}, 1);
    const Decoder dec(DecoderArch::for_classifier(clf.arch()), 2);
    for (std::int64_t frames : {64, 128, 251}) {
      const auto out = clf.forward(random_features({2, 40, frames}, 6));
      const Tensor m = dec.forward(out.latents, frames);
      REQUIRE(m.shape() == Shape{2, 257, frames});
      for (float v : m.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
      }
    }
    CHECK_THROWS_AS(dec.forward({}, 64), ShapeError);
  }

  TEST_CASE("decoder gradients match finite differences") {
    ClassifierArch arch;
    arch.channels = {4, 4, 6, 6, 8, 8};
    const auto clf = Classifier(arch, 1).cast<double>();
    DecoderArch darch = DecoderArch::for_classifier(arch, 33);
    darch.stage_channels = {4, 4, 3, 3};
    auto dec = Decoder(darch, 2).cast<double>();
    std::mt19937_64 rng(7);
    const auto latents = clf.forward(random_tensor({1, 40, 64}, rng, -2, 2)).latents;
    const auto loss_of = [&] { return mean(dec.forward(latents, 64)); };
    for (const auto& [name, p] : dec.named_parameters()) {
      Tensor64 param = p;
      for (auto& q : dec.parameters()) q.zero_grad();
      loss_of().backward();
      REQUIRE(param.has_grad());
      std::vector<double> analytic(param.grad().begin(), param.grad().end());
      std::uniform_int_distribution<std::size_t> idx(0, analytic.size() - 1);
      for (int trial = 0; trial < 5; ++trial) {
        const std::size_t i = idx(rng);
        auto v = param.mutable_data();
        const double orig = v[i];
        NoGradGuard guard;
        v[i] = orig + 1e-4;
        const double up = loss_of().item();
        v[i] = orig - 1e-4;
        const double down = loss_of().item();
        v[i] = orig;
        const double numeric = (up - down) / 2e-4;
        INFO(name << "[" << i << "]");
        CHECK(std::abs(analytic[i] - numeric) / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8}) < 1e-3);
      }
    }
  }

  TEST_CASE("randomize_from_top cuts from the head down") {
    const Classifier model({}, 11);
    const Tensor x = random_features({40, 96}, 12);
    const auto ref = model.forward(x);
    const auto before = model.named_parameters();
    std::vector<std::vector<float>> snapshot;
    for (const auto& [n, p] : before) snapshot.push_back(copy(p));

    Rng rng(3);
    const auto k0 = randomize_from_top(model, 0, rng);
    CHECK(copy(k0.forward(x).logits) == copy(ref.logits));

    const auto k1 = randomize_from_top(model, 1, rng);
    const auto out1 = k1.forward(x);
    for (std::size_t l = 0; l < ref.latents.size(); ++l) CHECK(copy(out1.latents[l]) == copy(ref.latents[l]));
    CHECK(copy(out1.logits) != copy(ref.logits));

    const auto k3 = randomize_from_top(model, 3, rng);
    const auto p3 = k3.named_parameters();
    for (std::size_t i = 0; i < p3.size(); ++i) {
      const bool cut = p3[i].first.rfind("head", 0) == 0 || p3[i].first.rfind("block6", 0) == 0 ||
                       p3[i].first.rfind("block5", 0) == 0;
      INFO(p3[i].first);
      CHECK((copy(p3[i].second) != snapshot[i]) == cut);
    }

    const auto k7 = randomize_from_top(model, 7, rng);
    const auto p7 = k7.named_parameters();
    for (std::size_t i = 0; i < p7.size(); ++i) CHECK(copy(p7[i].second) != snapshot[i]);

    // The source model is never mutated.
    const auto after = model.named_parameters();
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(copy(after[i].second) == snapshot[i]);
    CHECK_THROWS_AS(randomize_from_top(model, 8, rng), ConfigError);
    CHECK_THROWS_AS(randomize_from_top(model, -1, rng), ConfigError);
  }

  TEST_CASE("checkpoints round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "lmac_test_models";
    std::filesystem::create_directories(dir);
    Classifier model({}, 5);
    model.set_normalization(-4.0, 2.5);
    model.save(dir / "clf.lmt1");
    const auto loaded = Classifier::load(dir / "clf.lmt1");
    CHECK(loaded.input_mean() == -4.0);
    CHECK(loaded.input_std() == 2.5);
    const Tensor x = random_features({40, 70}, 9);
    CHECK(copy(loaded.forward(x).logits) == copy(model.forward(x).logits));

    const Decoder dec(DecoderArch::for_classifier(model.arch()), 6);
    dec.save(dir / "dec.lmt1");
    const auto dl = Decoder::load(dir / "dec.lmt1");
    const auto lat = model.forward(x).latents;
    CHECK(copy(dl.forward(lat, 70)) == copy(dec.forward(lat, 70)));
    CHECK_THROWS_AS(Classifier::load(dir / "missing.lmt1"), MissingPrerequisite);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("untrained and briefly trained classifiers") {
    DatasetConfig dc;
    dc.train_per_class = 12;
    dc.valid_per_class = 1;
    dc.test_per_class = 8;
    dc.seed = 3;
    const auto ds = build_dataset(dc);
    const MelFilterbank fb;
    const auto train = featurize(ds.train, fb);
    const auto test = featurize(ds.test, fb);
    ClassifierTrainConfig cfg;
    cfg.epochs = 0;
    const auto untrained = train_classifier(train, cfg);
    const double chance = accuracy(untrained, test);
    CHECK(chance >= 0.0);
    CHECK(chance <= 0.35);

    cfg.epochs = 4;
    std::vector<double> losses;
    const auto trained = train_classifier(train, cfg, {}, [&](const ClassifierTrainLog& l) { losses.push_back(l.mean_loss); });
    REQUIRE(losses.size() == 4);
    CHECK(losses.back() < losses.front());
    CHECK(accuracy(trained, test) > chance);
    for (const auto& p : trained.parameters()) CHECK_FALSE(p.requires_grad());
  }
}
