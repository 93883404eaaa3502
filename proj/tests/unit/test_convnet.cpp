#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dposelets/convnet.hpp"
#include "oracles.hpp"

using namespace dposelets;
using namespace dposelets::convnet;
using imaging::Image;

namespace {

template <class T>
std::vector<T> random_input(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(s.size());
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

// Conv (valid, stride s) -> rect -> max pool, evaluated with plain loops.
std::vector<double> naive_trunk(const std::vector<double>& in, const Shape& is, const std::vector<double>& w,
                                const std::vector<double>& b, int k, int out_c, int s, int pk, int ps) {
  const int oh = (is.h - k) / s + 1, ow = (is.w - k) / s + 1;
  std::vector<double> conv(static_cast<std::size_t>(out_c) * oh * ow);
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = b[o];
        for (int c = 0; c < is.c; ++c) {
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              acc += w[((static_cast<std::size_t>(o) * is.c + c) * k + dy) * k + dx] *
                     in[(static_cast<std::size_t>(c) * is.h + y * s + dy) * is.w + x * s + dx];
            }
          }
        }
        conv[(static_cast<std::size_t>(o) * oh + y) * ow + x] = std::max(0.0, acc);
      }
    }
  }
  const int ph = (oh - pk) / ps + 1, pw = (ow - pk) / ps + 1;
  std::vector<double> out(static_cast<std::size_t>(out_c) * ph * pw);
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        double m = -1e300;
        for (int dy = 0; dy < pk; ++dy) {
          for (int dx = 0; dx < pk; ++dx) m = std::max(m, conv[(static_cast<std::size_t>(o) * oh + y * ps + dy) * ow + x * ps + dx]);
        }
        out[(static_cast<std::size_t>(o) * ph + y) * pw + x] = m;
      }
    }
  }
  return out;
}

NetSpec fc_only(int n) {
  NetSpec s;
  s.input = {n, 1, 1};
  s.layers = {Layer::fc(n, n), Layer::softmax()};
  s.pdf_layer = 0;
  s.class_count = n;
  return s;
}

Image flat_patch(float v) { return Image(imaging::kPatchSide, imaging::kPatchSide, 3, v); }

}  // namespace

TEST_SUITE("convnet") {
  TEST_CASE("standard network shapes") {
    const auto spec = NetSpec::standard(6);
    const auto shapes = spec.shapes();
    CHECK(shapes[0] == Shape{16, 57, 57});
    CHECK(shapes[2] == Shape{16, 28, 28});
    CHECK(shapes[5] == Shape{32, 12, 12});
    CHECK(shapes[8] == Shape{64, 5, 5});
    CHECK(shapes[9] == Shape{kPdfWidth, 1, 1});
    CHECK(shapes.back() == Shape{6, 1, 1});
    CHECK(spec.pdf_width() == 256);
    CHECK(spec.trunk_end() == 9);
    CHECK(spec.trunk_stride() == 8);
  }

  TEST_CASE("zero parameters give uniform probabilities and loss ln(K)") {
    const auto spec = NetSpec::standard(6);
    const auto params = NetParams<double>::zeros(spec);
    const auto r = forward<double>(spec, params, flat_patch(0.7f));
    for (double p : r.probabilities) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    std::vector<std::vector<double>> xs{to_tensor<double>(flat_patch(0.2f))};
    std::vector<int> ys{3};
    CHECK(loss_and_grad<double>(spec, params, xs, ys).loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  }

  TEST_CASE("probabilities sum to one and PDF is rectified") {
    std::mt19937_64 rng(41);
    const auto spec = NetSpec::standard(4);
    const auto params = NetParams<float>::he_init(spec, 3);
    for (int t = 0; t < 5; ++t) {
      const auto r = forward<float>(spec, params, oracle::random_image(61, 61, 3, rng));
      CHECK(std::accumulate(r.probabilities.begin(), r.probabilities.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
      REQUIRE(r.pdf.size() == 256);
      for (float v : r.pdf) CHECK(v >= 0.0f);
    }
  }

  TEST_CASE("fully connected network with identity weights is a softmax of its input") {
    const auto spec = fc_only(4);
    auto params = NetParams<double>::zeros(spec);
    for (int i = 0; i < 4; ++i) params.weights[0][static_cast<std::size_t>(i * 4 + i)] = 1.0;
    const std::vector<double> x{0.5, -1.0, 2.0, 0.0};
    const auto r = forward<double>(spec, params, std::span<const double>(x));
    double z = 0.0;
    for (double v : x) z += std::exp(v);
    for (int i = 0; i < 4; ++i) {
      CHECK(r.probabilities[i] == doctest::Approx(std::exp(x[i]) / z).epsilon(1e-12));
      CHECK(r.pdf[i] == doctest::Approx(std::max(0.0, x[i])));
    }
  }

  TEST_CASE("convolution, rectifier and pooling match a naive evaluation") {
    std::mt19937_64 rng(43);
    NetSpec spec;
    spec.input = {2, 11, 10};
    spec.layers = {Layer::conv(3, 2, 3, 2), Layer::rect(), Layer::pool(2, 1)};
    const auto shapes = spec.shapes();
    const int flat = static_cast<int>(shapes.back().size());
    CHECK(shapes.back() == Shape{3, 4, 3});
    spec.layers.push_back(Layer::fc(flat, flat));
    spec.layers.push_back(Layer::softmax());
    spec.pdf_layer = 3;
    spec.class_count = flat;
    auto params = NetParams<double>::he_init(spec, 5);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& b : params.biases[0]) b = u(rng);
    std::fill(params.weights[3].begin(), params.weights[3].end(), 0.0);
    for (int i = 0; i < flat; ++i) params.weights[3][static_cast<std::size_t>(i * flat + i)] = 1.0;
    const auto x = random_input<double>(spec.input, rng);
    const auto expect = naive_trunk(x, spec.input, params.weights[0], params.biases[0], 3, 3, 2, 2, 1);
    const auto r = forward<double>(spec, params, std::span<const double>(x));
    REQUIRE(r.pdf.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(r.pdf[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(47);
    for (int v = 0; v < 4; ++v) {
      const auto spec = oracle::random_spec(v, rng);
      REQUIRE_NOTHROW(spec.validate());
      std::vector<std::vector<double>> xs;
      std::vector<int> ys;
      for (int i = 0; i < 3; ++i) {
        xs.push_back(random_input<double>(spec.input, rng));
        ys.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(spec.class_count)));
      }
      const auto params = NetParams<double>::he_init(spec, 100 + static_cast<std::uint64_t>(v));
      const auto lg = loss_and_grad<double>(spec, params, xs, ys, 1e-3);
      const auto check = oracle::check_gradient<double>(
          spec, params, lg.grads,
          [&](const NetParams<double>& p) { return loss_and_grad<double>(spec, p, xs, ys, 1e-3).loss; }, 1e-6, 8, rng);
      CHECK(check.checked > 0);
      CHECK(check.worst_relative < 1e-6);
    }
  }

  TEST_CASE("duplicating the batch leaves loss and gradient unchanged") {
    std::mt19937_64 rng(53);
    const auto spec = oracle::random_spec(1, rng);
    const auto params = NetParams<double>::he_init(spec, 9);
    std::vector<std::vector<double>> xs{random_input<double>(spec.input, rng), random_input<double>(spec.input, rng)};
    std::vector<int> ys{0, 1};
    auto xs2 = xs;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    std::vector<int> ys2{0, 1, 0, 1};
    const auto a = loss_and_grad<double>(spec, params, xs, ys);
    const auto b = loss_and_grad<double>(spec, params, xs2, ys2);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t l = 0; l < a.grads.weights.size(); ++l) {
      for (std::size_t i = 0; i < a.grads.weights[l].size(); ++i) {
        CHECK(a.grads.weights[l][i] == doctest::Approx(b.grads.weights[l][i]).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("training separates bright from dark patches") {
    std::mt19937_64 rng(59);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    std::vector<std::vector<float>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) {
      const int label = i % 2;
      Image p = flat_patch(label ? 0.7f : 0.3f);
      for (auto& v : p.data()) v += noise(rng);
      xs.push_back(to_tensor<float>(p));
      ys.push_back(label);
    }
    const auto spec = NetSpec::standard(2);
    SgdConfig cfg;
    cfg.epochs = 10;
    TrainReport report;
    const auto params = train<float>(spec, xs, ys, cfg, &report);
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto r = forward<float>(spec, params, std::span<const float>(xs[i]));
      correct += (r.probabilities[1] > r.probabilities[0]) == (ys[i] == 1);
    }
    CHECK(correct >= 198);
    REQUIRE(report.epoch_loss.size() == 10);
    CHECK(report.epoch_loss.back() < report.initial_loss);
  }

  TEST_CASE("training is deterministic and a zero learning rate is a no-op") {
    std::mt19937_64 rng(61);
    const auto spec = oracle::random_spec(0, rng);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 20; ++i) {
      xs.push_back(random_input<double>(spec.input, rng));
      ys.push_back(i % spec.class_count);
    }
    SgdConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    // Several runs in a row: heap placement of the scratch buffers shifts
    // between calls and must not change any bit.
    const auto first = train<double>(spec, xs, ys, cfg);
    for (int rep = 0; rep < 4; ++rep) CHECK(train<double>(spec, xs, ys, cfg) == first);
    const auto init = NetParams<double>::he_init(spec, 2);
    cfg.learning_rate = 0.0;
    CHECK(train_from<double>(spec, init, xs, ys, cfg) == init);
  }

  TEST_CASE("PdfNetwork extraction and dense evaluation") {
    const auto spec = NetSpec::standard(3);
    auto net = PdfNetwork(spec, NetParams<float>::he_init(spec, 7));
    std::mt19937_64 rng(67);
    const Image patch = oracle::random_image(61, 61, 3, rng);
    const auto f = net.extract_pdf(patch);
    CHECK(f.dim() == 256);
    CHECK(f.values == net.forward(patch).pdf);
    CHECK(f.extractor_tag == net.tag());
    CHECK(net.tag().rfind("pdf:", 0) == 0);

    const Image level = oracle::random_image(85, 77, 3, rng);
    const auto dense = net.dense_pdf(level, 8);
    CHECK(dense.windows_x == 4);
    CHECK(dense.windows_y == 3);
    for (int wy = 0; wy < dense.windows_y; ++wy) {
      for (int wx = 0; wx < dense.windows_x; ++wx) {
        const auto ref = net.extract_pdf(level.crop(wx * 8, wy * 8, 61, 61));
        const auto& got = dense.pdfs[static_cast<std::size_t>(wy * dense.windows_x + wx)];
        for (std::size_t i = 0; i < ref.values.size(); ++i) {
          CHECK(got.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-4).scale(1.0));
        }
      }
    }
    CHECK(net.dense_pdf(Image(60, 90, 3), 8).pdfs.empty());
    CHECK_THROWS_AS(net.forward(Image(60, 61, 3)), Error);
  }

  TEST_CASE("error reporting") {
    const auto spec = NetSpec::standard(2);
    std::vector<std::vector<float>> xs{to_tensor<float>(flat_patch(0.5f))};
    auto code_of = [](auto&& f) {
      try {
        f();
      } catch (const Error& e) {
        return e.code();
      }
      return Errc::InvalidConfig;
    };
    const SgdConfig cfg;
    std::vector<int> bad{2};
    CHECK(code_of([&] { train<float>(spec, xs, bad, cfg); }) == Errc::LabelOutOfRange);
    CHECK(code_of([&] { train<float>(spec, {}, {}, cfg); }) == Errc::EmptyDataset);
    std::vector<int> two{0, 1};
    CHECK(code_of([&] { train<float>(spec, xs, two, cfg); }) == Errc::ShapeMismatch);
    NetSpec broken = spec;
    broken.layers.pop_back();
    CHECK_THROWS_AS(broken.validate(), Error);
    SgdConfig neg;
    neg.momentum = 1.0;
    CHECK_THROWS_AS(neg.validate(), Error);
  }
}
