#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "lmac/error.hpp"
#include "lmac/models.hpp"
#include "lmac/ops.hpp"
#include "lmac/optim.hpp"

using namespace lmac;
using lmac::testing::contracted;
using lmac::testing::gradcheck;
using lmac::testing::random_tensor;

namespace {

using Fn = std::function<Tensor64(const std::vector<Tensor64>&)>;

constexpr double kOpTol = 1e-4;
constexpr double kH = 1e-4;

void check_op(const Fn& f, std::vector<Tensor64> inputs, double tol = kOpTol) {
  const double err = gradcheck(contracted(f), std::move(inputs), kH);
  CHECK(err < tol);
}

std::vector<double> values(const Tensor64& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("elementwise forward values") {
    const Tensor x({3}, std::vector<float>{-1, 0, 2});
    const Tensor r = relu(x);
    CHECK(r.at(0) == 0.0f);
    CHECK(r.at(1) == 0.0f);
    CHECK(r.at(2) == 2.0f);
    CHECK(sigmoid(Tensor({1}, std::vector<float>{0})).item() == doctest::Approx(0.5));
  }

  TEST_CASE("mul gradient at a=2, b=3") {
    Tensor64 a({1}, {2.0}, true), b({1}, {3.0}, true);
    sum(mul(a, b)).backward();
    CHECK(a.grad()[0] == doctest::Approx(3.0));
    CHECK(b.grad()[0] == doctest::Approx(2.0));
  }

  TEST_CASE("elementwise gradients match finite differences") {
    std::mt19937_64 rng(1);
    const auto a = random_tensor({3, 4}, rng);
    const auto b = random_tensor({3, 4}, rng);
    const auto pos = random_tensor({3, 4}, rng, 0.5, 2.0);
    check_op([](const auto& in) { return add(in[0], in[1]); }, {a, b});
    check_op([](const auto& in) { return sub(in[0], in[1]); }, {a, b});
    check_op([](const auto& in) { return mul(in[0], in[1]); }, {a, b});
    check_op([](const auto& in) { return scale(in[0], 2.5); }, {a});
    check_op([](const auto& in) { return shift(in[0], -0.3); }, {a});
    check_op([](const auto& in) { return relu(in[0]); }, {a});
    check_op([](const auto& in) { return sigmoid(in[0]); }, {a});
    check_op([](const auto& in) { return log(in[0]); }, {pos});
    check_op([](const auto& in) { return exp(in[0]); }, {a});
    check_op([](const auto& in) { return abs(in[0]); }, {a});
  }

  TEST_CASE("scalar broadcasting in binary ops") {
    std::mt19937_64 rng(2);
    const auto a = random_tensor({2, 3}, rng);
    const auto s = random_tensor({1}, rng);
    check_op([](const auto& in) { return mul(in[0], in[1]); }, {a, s});
    check_op([](const auto& in) { return sub(in[1], in[0]); }, {a, s});
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  }

  TEST_CASE("elementwise dispatcher agrees with named ops") {
    std::mt19937_64 rng(3);
    const auto a = random_tensor({5}, rng);
    const auto b = random_tensor({5}, rng);
    CHECK(values(elementwise(Elementwise::mul, a, b)) == values(mul(a, b)));
    CHECK(values(elementwise(Elementwise::sigmoid, a)) == values(sigmoid(a)));
    CHECK(values(elementwise(Elementwise::scale, a, Tensor64::scalar(3.0))) == values(scale(a, 3.0)));
  }

  TEST_CASE("non-finite outputs raise") {
    CHECK_THROWS_AS(log(Tensor({1}, std::vector<float>{-1.0f})), NumericError);
    CHECK_THROWS_AS(exp(Tensor({1}, std::vector<float>{1000.0f})), NumericError);
  }

  TEST_CASE("reductions, reshape, concat and stack") {
    std::mt19937_64 rng(4);
    const auto a = random_tensor({2, 3, 4}, rng);
    const auto b = random_tensor({2, 1, 4}, rng);
    check_op([](const auto& in) { return sum(in[0]); }, {a});
    check_op([](const auto& in) { return mean(in[0]); }, {a});
    check_op([](const auto& in) { return reshape(in[0], {6, 4}); }, {a});
    check_op([](const auto& in) { return concat(std::vector<Tensor64>{in[0], in[1]}, 1); }, {a, b});
    check_op([](const auto& in) { return stack(std::vector<Tensor64>{in[0], in[1]}); },
             {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)});
    check_op([](const auto& in) { return mean_spatial(in[0]); }, {random_tensor({2, 3, 4, 5}, rng)});
  }

  TEST_CASE("matmul values and gradients") {
    const Tensor64 eye({2, 2}, {1, 0, 0, 1});
    const Tensor64 m({2, 2}, {1, 2, 3, 4});
    CHECK(values(matmul(eye, m)) == values(m));
    CHECK(matmul(Tensor64({1, 2}, {1, 2}), Tensor64({2, 1}, {3, 4})).item() == 11.0);
    std::mt19937_64 rng(5);
    check_op([](const auto& in) { return matmul(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    check_op([](const auto& in) { return matmul(in[0], in[1]); },
             {random_tensor({3, 4}, rng), random_tensor({2, 4, 5}, rng)});
    check_op([](const auto& in) { return linear(in[0], in[1], in[2]); },
             {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)});
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  }

  TEST_CASE("conv2d values and gradients") {
    const Tensor64 x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(conv2d(x, Tensor64({1, 1, 2, 2}, {1, 0, 0, 1})).item() == 5.0);
    CHECK(values(conv2d(x, Tensor64({1, 1, 1, 1}, {1.0}))) == values(x));
    std::mt19937_64 rng(6);
    check_op([](const auto& in) { return conv2d(in[0], in[1], in[2]); },
             {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    check_op([](const auto& in) { return conv2d(in[0], in[1], in[2], {2, 1}); },
             {random_tensor({2, 2, 6, 7}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3})), ShapeError);
  }

  TEST_CASE("conv_transpose2d values, gradients and adjointness") {
    const Tensor64 x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(values(conv_transpose2d(x, Tensor64({1, 1, 1, 1}, {1.0}))) == values(x));
    const Tensor64 up = conv_transpose2d(x, Tensor64({1, 1, 2, 2}, {1, 1, 1, 1}), {}, {2, 0});
    REQUIRE(up.shape() == Shape{1, 1, 4, 4});
    const std::vector<double> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(values(up) == expected);

    std::mt19937_64 rng(7);
    check_op([](const auto& in) { return conv_transpose2d(in[0], in[1], in[2], {2, 1}); },
             {random_tensor({2, 3, 3, 4}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({2}, rng)});

    for (const ConvOptions opt : {ConvOptions{1, 0}, ConvOptions{1, 1}, ConvOptions{2, 1}}) {
      const auto w = random_tensor({3, 2, 4, 4}, rng);
      const auto xin = random_tensor({1, 2, 8, 8}, rng);
      const auto y = conv2d(xin, w, {}, opt);
      const auto u = random_tensor(y.shape(), rng);
      const auto back = conv_transpose2d(u, w, {}, opt);
      REQUIRE(back.shape() == xin.shape());
      const double lhs = lmac::testing::dot(y.data(), u.data());
      const double rhs = lmac::testing::dot(xin.data(), back.data());
      CHECK(std::abs(lhs - rhs) < 1e-5 * std::max(1.0, std::abs(lhs)));
    }
  }

  TEST_CASE("pooling values, tie breaking and gradients") {
    const Tensor64 x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(pool2d(PoolKind::max, x, {}).item() == 4.0);
    CHECK(pool2d(PoolKind::avg, x, {}).item() == 2.5);

    Tensor64 ties({1, 1, 2, 2}, {5, 5, 5, 5}, true);
    sum(pool2d(PoolKind::max, ties, {})).backward();
    CHECK(values(Tensor64({4}, std::vector<double>(ties.grad().begin(), ties.grad().end()))) ==
          std::vector<double>{1, 0, 0, 0});

    std::mt19937_64 rng(8);
    check_op([](const auto& in) { return pool2d(PoolKind::avg, in[0], {}); }, {random_tensor({2, 3, 6, 8}, rng)});
    check_op([](const auto& in) { return pool2d(PoolKind::max, in[0], {}); }, {random_tensor({2, 3, 6, 8}, rng)});
    check_op([](const auto& in) { return pool2d(PoolKind::avg, in[0], {1, 2, 1, 2}); },
             {random_tensor({1, 2, 1, 8}, rng)});
  }

  TEST_CASE("resize_bilinear gradients and adjointness") {
    std::mt19937_64 rng(9);
    check_op([](const auto& in) { return resize_bilinear(in[0], 7, 11); }, {random_tensor({2, 2, 3, 5}, rng)});
    check_op([](const auto& in) { return resize_bilinear(in[0], 2, 3); }, {random_tensor({1, 2, 5, 7}, rng)});
    Tensor64 x = random_tensor({1, 1, 4, 6}, rng, -1, 1, true);
    const Tensor64 y = resize_bilinear(x, 9, 13);
    const auto u = random_tensor(y.shape(), rng);
    sum(mul(y, u)).backward();
    const double lhs = lmac::testing::dot(y.data(), u.data());
    const double rhs = lmac::testing::dot(x.data(), x.grad());
    CHECK(std::abs(lhs - rhs) < 1e-5 * std::max(1.0, std::abs(lhs)));
  }

  TEST_CASE("log_softmax and nll_loss") {
    const Tensor64 z({1, 2}, {0.0, 0.0});
    const auto l = log_softmax(z);
    CHECK(l.at(0) == doctest::Approx(-std::log(2.0)));
    const std::vector<int> t0{0};
    CHECK(nll_loss(log_softmax(Tensor64({1, 2}, {60.0, -60.0})), t0).item() < 1e-6);
    CHECK_THROWS_AS(nll_loss(l, std::vector<int>{2}), ConfigError);

    std::mt19937_64 rng(10);
    const auto logits = random_tensor({2, 5}, rng, -3, 3);
    const auto ls = log_softmax(logits);
    for (int b = 0; b < 2; ++b) {
      double s = 0.0;
      for (int c = 0; c < 5; ++c) s += std::exp(ls.at(b * 5 + c));
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    check_op([](const auto& in) { return log_softmax(in[0]); }, {logits});
    const std::vector<int> target{3, 1};
    check_op([&target](const auto& in) { return nll_loss(log_softmax(in[0]), target); }, {logits});
    check_op([&target](const auto& in) { return pick(in[0], target); }, {logits});
  }

  TEST_CASE("backward accumulation contract") {
    Tensor64 x({2}, {1.0, 2.0}, true);
    sum(mul(x, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    sum(x).backward();
    CHECK(x.grad()[1] == doctest::Approx(5.0));
    x.zero_grad();
    sum(x).backward();
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(mul(x, x).backward(), ShapeError);
  }

  TEST_CASE("no-grad guard builds no graph") {
    Tensor x({2}, std::vector<float>{1, 2}, true);
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }

  TEST_CASE("full classifier gradients match finite differences") {
    ClassifierArch arch;
    arch.channels = {4, 4, 6, 6, 8, 8};
    BasicClassifier<double> model = Classifier(arch, 3).cast<double>();
    std::mt19937_64 rng(11);
    const auto features = random_tensor({2, 40, 64}, rng, -2, 2);
    const std::vector<int> y{1, 5};
    const auto params = model.named_parameters();
    // Spot-check five coordinates per tensor. A small step keeps relu
    // kinks out of the difference quotient.
    constexpr double h = 1e-6;
    const auto loss_of = [&] { return nll_loss(log_softmax(model.logits(features)), y); };
    for (const auto& [name, p] : params) {
      Tensor64 param = p;
      for (auto& q : model.parameters()) q.zero_grad();
      loss_of().backward();
      std::vector<double> analytic(param.grad().begin(), param.grad().end());
      std::uniform_int_distribution<std::size_t> pick_index(0, analytic.size() - 1);
      for (int trial = 0; trial < 5; ++trial) {
        const std::size_t i = pick_index(rng);
        auto v = param.mutable_data();
        const double orig = v[i];
        double numeric = 0.0;
        {
          NoGradGuard guard;
          v[i] = orig + h;
          const double up = loss_of().item();
          v[i] = orig - h;
          const double down = loss_of().item();
          v[i] = orig;
          numeric = (up - down) / (2 * h);
        }
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        INFO(name << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric);
        CHECK(std::abs(analytic[i] - numeric) / denom < 1e-3);
      }
    }
  }

  TEST_CASE("adam: zero gradient, first step and determinism") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    std::vector<float> p{1.0f};
    AdamMoments st{{0.0f}, {0.0f}};
    adam_step(p, std::vector<float>{0.0f}, st, 1, cfg);
    CHECK(p[0] == 1.0f);
    AdamMoments st2{{0.0f}, {0.0f}};
    adam_step(p, std::vector<float>{1.0f}, st2, 1, cfg);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));

    const auto run = [] {
      Tensor w({3}, std::vector<float>{0.5f, -0.2f, 0.1f}, true);
      Adam opt({w}, AdamConfig{});
      for (int i = 0; i < 5; ++i) {
        opt.zero_grad();
        sum(mul(w, w)).backward();
        opt.step();
      }
      return std::vector<float>(w.data().begin(), w.data().end());
    };
    CHECK(run() == run());
  }
}
