#include <cmath>
#include <numbers>

#include "doctest.h"
#include "geoview/common/error.hpp"
#include "geoview/numerics/ops.hpp"
#include "geoview/numerics/optim.hpp"
#include "support.hpp"

using namespace geoview;
using namespace geoview::nn;
using geoview::testing::check_gradients;
using geoview::testing::random_tensor;

TEST_SUITE("numerics") {

TEST_CASE("matmul small cases") {
  auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(id, m);
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{1, 2, 3, 4});
  auto dot = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(dot.shape() == Shape{1, 1});
  CHECK(dot.item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    const std::string msg = e.what();
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient against finite differences") {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2);
  auto w = random_tensor({3, 2}, 3, false);
  auto rep = check_gradients({{"a", a}, {"b", b}},
                             [&] { return sum(mul(matmul(a, b), w)); }, 1e-5);
  CHECK_MESSAGE(rep.max_rel < 1e-6, rep.worst);
}

TEST_CASE("softmax") {
  auto u = softmax(Tensor::from({1, 3}, {0, 0, 0}), 1);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = softmax(Tensor::from({1, 2}, {1000, 0}), 1);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == 1.0);
  CHECK(big[1] < 1e-300);

  auto s = softmax(Tensor::from({1, 3}, {1, 2, 3}), 1);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s[i] - std::exp(i + 1.0) / z) < 1e-12);
}

TEST_CASE("softmax along axis 0 and its gradient") {
  auto x = random_tensor({4, 3}, 7, true, 2.0);
  auto y = softmax(x, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    double col = 0.0;
    for (std::size_t r = 0; r < 4; ++r) col += y.at(r, c);
    CHECK(std::abs(col - 1.0) < 1e-12);
  }
  auto w = random_tensor({4, 3}, 8, false);
  auto rep = check_gradients({{"x", x}}, [&] { return sum(mul(softmax(x, 0), w)); }, 1e-5);
  CHECK_MESSAGE(rep.max_rel < 1e-6, rep.worst);
}

TEST_CASE("backward basics") {
  auto w = random_tensor({3, 5}, 11);
  backward(sum(w));
  for (double g : w.grad()) CHECK(g == 1.0);

  auto v = random_tensor({2, 3}, 12);
  backward(scale(sum(square(v)), 0.5));
  for (std::size_t i = 0; i < v.numel(); ++i) CHECK(v.grad()[i] == doctest::Approx(v[i]).epsilon(1e-15));
}

TEST_CASE("shared subexpression accumulates once per use") {
  auto x = random_tensor({2, 2}, 13);
  auto y = tanh(x);
  auto loss = sum(add(y, mul(y, y)));
  backward(loss);
  for (std::size_t i = 0; i < 4; ++i) {
    const double t = std::tanh(x[i]);
    CHECK(x.grad()[i] == doctest::Approx((1 + 2 * t) * (1 - t * t)).epsilon(1e-13));
  }
}

TEST_CASE("elementwise and reduction ops pass finite differences") {
  auto a = random_tensor({3, 4}, 21);
  auto b = random_tensor({3, 4}, 22);
  auto bias = random_tensor({4}, 23);
  auto w = random_tensor({6, 4}, 24, false);
  const std::vector<double> mask{1, 0, 1, 1, 0.5, 1};
  auto f = [&] {
    auto h = add_bias(add(mul(tanh(a), relu(b)), sub(square(a), scale(b, 0.3))), bias);
    auto m = mean(mul(block_mean(h, 1, 3), Tensor::from({1, 4}, {1, -2, 3, 0.5})));
    auto tall = matmul(Tensor::from({6, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 1}), h);
    auto seg = segment_mean(mul(tall, w), 2, mask);
    return add(m, sum(seg));
  };
  auto rep = check_gradients({{"a", a}, {"b", b}, {"bias", bias}}, f, 1e-5);
  CHECK_MESSAGE(rep.max_rel < 1e-6, rep.worst);
}

TEST_CASE("gather_rows") {
  auto x = random_tensor({4, 3}, 41);
  const std::vector<std::size_t> idx{2, 0, 2, 3};
  auto y = gather_rows(x, idx);
  CHECK(y.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(y.at(i, c) == x.at(idx[i], c));
  auto w = random_tensor({4, 3}, 42, false);
  auto rep = check_gradients({{"x", x}}, [&] { return sum(mul(gather_rows(x, idx), w)); }, 1e-5);
  CHECK_MESSAGE(rep.max_rel < 1e-6, rep.worst);
  const std::vector<std::size_t> bad{4};
  CHECK_THROWS_AS(gather_rows(x, bad), Error);
}

TEST_CASE("segment_mean with an empty segment yields zeros") {
  auto x = Tensor::from({4, 1}, {1, 2, 3, 4});
  const std::vector<double> mask{0, 0, 1, 1};
  auto m = segment_mean(x, 2, mask);
  CHECK(m[0] == 0.0);
  CHECK(m[1] == 3.5);
}

TEST_CASE("attention against a scalar reference") {
  const std::size_t heads = 2, groups = 2, nq = 3, nk = 4, c = 4, dh = c / heads;
  auto q = random_tensor({groups * nq, c}, 31);
  auto k = random_tensor({groups * nk, c}, 32);
  auto v = random_tensor({groups * nk, c}, 33);
  auto out = attention(q, k, v, heads, groups);
  auto wts = attention_weights(q, k, heads, groups);
  CHECK(wts.shape() == Shape{groups, heads, nq, nk});
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < nq; ++i) {
        std::vector<double> s(nk);
        double mx = -1e300;
        for (std::size_t j = 0; j < nk; ++j) {
          double d = 0;
          for (std::size_t e = 0; e < dh; ++e)
            d += q.at(g * nq + i, h * dh + e) * k.at(g * nk + j, h * dh + e);
          s[j] = d * inv;
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (double& x : s) z += (x = std::exp(x - mx));
        double row = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          s[j] /= z;
          row += wts[((g * heads + h) * nq + i) * nk + j];
          CHECK(std::abs(wts[((g * heads + h) * nq + i) * nk + j] - s[j]) < 1e-12);
        }
        CHECK(std::abs(row - 1.0) < 1e-12);
        for (std::size_t e = 0; e < dh; ++e) {
          double o = 0;
          for (std::size_t j = 0; j < nk; ++j) o += s[j] * v.at(g * nk + j, h * dh + e);
          CHECK(std::abs(out.at(g * nq + i, h * dh + e) - o) < 1e-12);
        }
      }
}

TEST_CASE("attention is bit-reproducible across allocations") {
  auto q = random_tensor({12, 8}, 45);
  auto k = random_tensor({20, 8}, 46);
  auto v = random_tensor({20, 8}, 47);
  const auto first = attention(q, k, v, 4, 2);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<std::vector<double>> spacers;
    for (int i = 0; i <= trial; ++i) spacers.emplace_back(static_cast<std::size_t>(i + 1));
    const auto again = attention(q.clone(), k.clone(), v.clone(), 4, 2);
    CHECK(geoview::testing::bit_equal(first.data(), again.data()));
  }
}

TEST_CASE("attention gradient against finite differences") {
  auto q = random_tensor({6, 4}, 41);
  auto k = random_tensor({8, 4}, 42);
  auto v = random_tensor({8, 4}, 43);
  auto w = random_tensor({6, 4}, 44, false);
  auto rep = check_gradients({{"q", q}, {"k", k}, {"v", v}},
                             [&] { return sum(mul(attention(q, k, v, 2, 2), w)); }, 1e-5);
  CHECK_MESSAGE(rep.max_rel < 1e-6, rep.worst);
}

TEST_CASE("cosine schedule endpoints") {
  CosineSchedule s{0.01, 100};
  CHECK(s.lr_at(0) == 0.01);
  CHECK(s.lr_at(100) <= 1e-3 * 0.01);
  CHECK(s.lr_at(50) == doctest::Approx(0.005).epsilon(1e-12));
}

TEST_CASE("adamw leaves parameters alone with zero grads and zero decay") {
  auto p = random_tensor({3, 3}, 51);
  const std::vector<double> before(p.data().begin(), p.data().end());
  AdamW opt({{"p", p}}, {.base_lr = 0.1, .weight_decay = 0.0}, 10);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    p.mutable_grad();
    opt.step();
  }
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == before);
}

TEST_CASE("adamw matches a scalar reference") {
  auto p = Tensor::from({1}, {0.7}, true);
  const AdamWConfig cfg{.base_lr = 0.05, .weight_decay = 0.1};
  const std::uint64_t total = 10;
  AdamW opt({{"p", p}}, cfg, total);
  double w = 0.7, m = 0, v = 0;
  for (std::uint64_t t = 1; t <= 10; ++t) {
    opt.zero_grad();
    p.mutable_grad()[0] = 1.0;
    opt.step();
    const double lr = cfg.base_lr * 0.5 * (1 + std::cos(std::numbers::pi * double(t - 1) / double(total)));
    w *= 1 - lr * cfg.weight_decay;
    m = cfg.beta1 * m + (1 - cfg.beta1);
    v = cfg.beta2 * v + (1 - cfg.beta2);
    const double mh = m / (1 - std::pow(cfg.beta1, double(t)));
    const double vh = v / (1 - std::pow(cfg.beta2, double(t)));
    w -= lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(std::abs(p[0] - w) < 1e-12);
  }
}

TEST_CASE("adamw counts parameters without gradients") {
  auto a = random_tensor({2}, 61);
  auto b = random_tensor({2}, 62);
  AdamW opt({{"a", a}, {"b", b}}, {}, 4);
  backward(sum(a));
  opt.step();
  CHECK(opt.skipped_missing_grad() == 1);
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
  auto run = [] {
    auto w = random_tensor({4, 3}, 71);
    auto x = random_tensor({5, 4}, 72, false);
    AdamW opt({{"w", w}}, {.base_lr = 0.01}, 20);
    for (int i = 0; i < 20; ++i) {
      opt.zero_grad();
      backward(mean(square(tanh(matmul(x, w)))));
      opt.step();
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  CHECK(geoview::testing::bit_equal(run(), run()));
}

}  // TEST_SUITE
