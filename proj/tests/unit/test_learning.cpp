#include <array>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "dposelets/learning.hpp"
#include "oracles.hpp"

using namespace dposelets;
using namespace dposelets::learning;
using features::FeatureVector;

namespace {

FeatureVector fv(std::vector<float> v, std::string tag = "t") { return {std::move(v), std::move(tag)}; }

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidConfig;
}

struct Instance {
  std::vector<std::array<double, 2>> pts;
  std::vector<int> ys;
  std::vector<FeatureVector> xs;
};

Instance random_instance(std::mt19937_64& rng, int n, double gap) {
  std::normal_distribution<double> g(0.0, 1.0);
  Instance in;
  for (int i = 0; i < n; ++i) {
    const int y = i % 2 ? 1 : -1;
    const std::array<double, 2> p{g(rng) + y * gap, g(rng) + 0.5 * y * gap};
    in.pts.push_back(p);
    in.ys.push_back(y);
    in.xs.push_back(fv({static_cast<float>(p[0]), static_cast<float>(p[1])}));
    in.pts.back() = {static_cast<double>(in.xs.back().values[0]), static_cast<double>(in.xs.back().values[1])};
  }
  return in;
}

}  // namespace

TEST_SUITE("learning") {
  TEST_CASE("one-dimensional separable pair") {
    const std::vector<FeatureVector> xs{fv({1.0f}), fv({-1.0f})};
    const std::vector<int> ys{1, -1};
    SvmConfig cfg;
    cfg.lambda = 0.01;
    cfg.epochs = 200;
    const auto m = train_svm(xs, ys, cfg);
    CHECK(score(m, xs[0]) > 0);
    CHECK(score(m, xs[1]) < 0);
    CHECK(m.extractor_tag == "t");
    CHECK(m.lambda == 0.01);

    // Flipping every label mirrors the model.
    const std::vector<int> flipped{-1, 1};
    const auto f = train_svm(xs, flipped, cfg);
    CHECK(score(f, xs[0]) < 0);
    CHECK(score(f, xs[1]) > 0);
  }

  TEST_CASE("objective within 2% of the brute-force optimum") {
    std::mt19937_64 rng(71);
    for (int t = 0; t < 3; ++t) {
      const auto in = random_instance(rng, 40, 1.0);
      const double lambda = 0.05;
      SvmConfig cfg;
      cfg.lambda = lambda;
      cfg.epochs = 200;
      cfg.seed = static_cast<std::uint64_t>(t + 1);
      const auto m = train_svm(in.xs, in.ys, cfg);
      const auto opt = oracle::brute_force_svm_2d(in.pts, in.ys, lambda);
      const double got = svm_objective(m, in.xs, in.ys, lambda);
      CHECK(got == doctest::Approx(oracle::svm_objective_2d(in.pts, in.ys, m.weights[0], m.weights[1], m.bias, lambda)));
      CHECK(got <= 1.02 * opt.objective);
      // Never worse than the zero model.
      LinearModel zero{{0.0, 0.0}, 0.0, "t", lambda};
      CHECK(got <= svm_objective(zero, in.xs, in.ys, lambda) + 1e-12);
    }
  }

  TEST_CASE("separable data is fit exactly and training is deterministic") {
    std::mt19937_64 rng(73);
    const auto in = random_instance(rng, 40, 6.0);
    SvmConfig cfg;
    cfg.lambda = 1e-3;
    cfg.epochs = 100;
    const auto m = train_svm(in.xs, in.ys, cfg);
    for (std::size_t i = 0; i < in.xs.size(); ++i) CHECK(in.ys[i] * score(m, in.xs[i]) > 0);
    const auto again = train_svm(in.xs, in.ys, cfg);
    CHECK(again.weights == m.weights);
    CHECK(again.bias == m.bias);

    std::vector<double> objective;
    train_svm(in.xs, in.ys, cfg, &objective);
    CHECK(objective.size() == 100);
  }

  TEST_CASE("score arithmetic and linearity") {
    const LinearModel m{{1.0, -2.0, 0.5}, 0.25, "t", 0.1};
    CHECK(score(m, fv({2.0f, 1.0f, 4.0f})) == doctest::Approx(2.0 - 2.0 + 2.0 + 0.25));
    const auto a = fv({0.3f, -0.2f, 1.0f}), b = fv({1.5f, 0.7f, -0.4f});
    FeatureVector sum = a;
    for (std::size_t i = 0; i < 3; ++i) sum.values[i] += b.values[i];
    CHECK(score(m, sum) - m.bias ==
          doctest::Approx((score(m, a) - m.bias) + (score(m, b) - m.bias)).epsilon(1e-6));
    CHECK(code_of([&] { score(m, fv({1.0f, 2.0f})); }) == Errc::DimMismatch);
    CHECK(code_of([&] { score(m, fv({1.0f, 2.0f, 3.0f}, "other")); }) == Errc::MixedExtractorTags);
  }

  TEST_CASE("training input errors") {
    const SvmConfig cfg;
    CHECK(code_of([&] {
            const std::vector<FeatureVector> xs{fv({1.0f}), fv({2.0f})};
            train_svm(xs, std::vector<int>{1, 1}, cfg);
          }) == Errc::SingleClassData);
    CHECK(code_of([&] {
            const std::vector<FeatureVector> xs{fv({1.0f}), fv({2.0f}, "u")};
            train_svm(xs, std::vector<int>{1, -1}, cfg);
          }) == Errc::MixedExtractorTags);
    CHECK(code_of([&] {
            const std::vector<FeatureVector> xs{fv({1.0f}), fv({2.0f, 1.0f})};
            train_svm(xs, std::vector<int>{1, -1}, cfg);
          }) == Errc::DimMismatch);
    CHECK(code_of([&] {
            const std::vector<FeatureVector> xs{fv({1.0f}), fv({NAN})};
            train_svm(xs, std::vector<int>{1, -1}, cfg);
          }) == Errc::NonFiniteFeature);
  }

  TEST_CASE("calibration of symmetric scores is centred") {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 1; i <= 50; ++i) {
      scores.push_back(i * 0.1);
      labels.push_back(i % 5 != 0);
      scores.push_back(-i * 0.1);
      labels.push_back(i % 5 == 0);
    }
    const auto c = calibrate(scores, labels);
    CHECK(c.a < 0);
    CHECK(c.probability(0.0) == doctest::Approx(0.5).epsilon(1e-3));
    double prev = 0.0;
    for (double s = -5; s <= 5; s += 0.25) {
      const double p = c.probability(s);
      CHECK(p > prev);
      CHECK(p < 1.0);
      prev = p;
    }
  }

  TEST_CASE("calibration recovers a known sigmoid") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = -2.0, b = 0.5;
    auto truth = [&](double s) { return 1.0 / (1.0 + std::exp(a * s + b)); };
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 20000; ++i) {
      const double s = u(rng) * 6.0 - 3.0;
      scores.push_back(s);
      labels.push_back(u(rng) < truth(s));
    }
    const auto c = calibrate(scores, labels);
    for (double s = -3; s <= 3; s += 0.5) CHECK(std::abs(c.probability(s) - truth(s)) < 0.05);
    CHECK(code_of([&] { calibrate(std::vector<double>{1.0, 2.0}, std::vector<int>{1, 1}); }) == Errc::SingleClassData);
  }
}
