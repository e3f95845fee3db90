#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "redsr/errors.hpp"
#include "redsr/gradcheck.hpp"
#include "redsr/losses.hpp"
#include "redsr/ops.hpp"
#include "redsr/random.hpp"

using namespace redsr;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng = make_rng(seed, {0x1055});
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// 2 * integral (F - G)^2 dx for two 1-D empirical distributions, evaluated
// exactly on the merged breakpoints.
double cramer_energy(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::vector<double> pts(x);
  pts.insert(pts.end(), y.begin(), y.end());
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double mid = 0.5 * (pts[i] + pts[i + 1]);
    const double F = static_cast<double>(std::upper_bound(x.begin(), x.end(), mid) - x.begin()) /
                     static_cast<double>(x.size());
    const double G = static_cast<double>(std::upper_bound(y.begin(), y.end(), mid) - y.begin()) /
                     static_cast<double>(y.size());
    total += (F - G) * (F - G) * (pts[i + 1] - pts[i]);
  }
  return 2.0 * total;
}

}  // namespace

TEST_SUITE("loss_rd") {
  TEST_CASE("examples") {
    const Tensor x = random_tensor({2, 3, 4, 4}, 1);
    CHECK(loss_rd(x, x).item() == 0.0);
    CHECK(loss_rd(Tensor::zeros({1, 3, 2, 2}), Tensor::full({1, 3, 2, 2}, 1.0)).item() == 1.0);
    CHECK(loss_rd(Tensor({2}, {0.0, 0.5}), Tensor({2}, {0.5, 1.5})).item() == 0.75);
    CHECK_THROWS_AS(loss_rd(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  }
}

TEST_SUITE("targets") {
  TEST_CASE("gaussian moments per dimension") {
    Rng rng = make_rng(2);
    const Tensor t = sample_targets(TargetKind::kGaussian, 4, 100000, rng);
    for (std::size_t k = 0; k < 4; ++k) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 100000; ++i) mean += t[i * 4 + k];
      mean /= 100000.0;
      for (std::size_t i = 0; i < 100000; ++i) var += (t[i * 4 + k] - mean) * (t[i * 4 + k] - mean);
      var /= 100000.0;
      CHECK(std::abs(mean) < 0.02);
      CHECK(std::abs(var - 1.0) < 0.05);
    }
  }

  TEST_CASE("uniform support and exponential moments") {
    Rng rng = make_rng(3);
    const Tensor u = sample_targets(TargetKind::kUniform, 3, 20000, rng);
    for (double v : u.data()) CHECK(std::abs(v) <= std::sqrt(3.0));
    const Tensor e = sample_targets(TargetKind::kExponential, 2, 100000, rng);
    const auto ev = values(e);
    const double mean = std::accumulate(ev.begin(), ev.end(), 0.0) / static_cast<double>(ev.size());
    double var = 0.0;
    for (double v : ev) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ev.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
    CHECK(*std::min_element(ev.begin(), ev.end()) >= -1.0);
  }

  TEST_CASE("seeded and validated") {
    const TargetDistribution d{TargetKind::kGaussian, 5, 42};
    CHECK(values(sample_targets(d, 8)) == values(sample_targets(d, 8)));
    CHECK(sample_targets(d, 8).shape() == Shape{8, 5});
    CHECK_THROWS_AS(sample_targets(d, 0), ParameterError);
    CHECK(parse_target("exponential") == TargetKind::kExponential);
    CHECK(target_name(TargetKind::kUniform) == "uniform");
    CHECK_THROWS_AS(parse_target("laplace"), ConfigError);
  }
}

TEST_SUITE("loss_ed") {
  TEST_CASE("hand examples") {
    CHECK(loss_ed(Tensor({1, 1}, {0.0}), Tensor({1, 1}, {3.0})).item() == 6.0);
    CHECK(loss_ed(Tensor({2, 1}, {0.0, 0.0}), Tensor({2, 1}, {1.0, 1.0})).item() == 2.0);
    CHECK_THROWS_AS(loss_ed(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), DimensionError);
  }

  TEST_CASE("equal multisets cancel") {
    const Tensor x = random_tensor({6, 4}, 4);
    std::vector<double> shuffled;
    for (std::size_t r : {3, 0, 5, 1, 4, 2})
      for (std::size_t k = 0; k < 4; ++k) shuffled.push_back(x[r * 4 + k]);
    CHECK(std::abs(loss_ed(x, Tensor({6, 4}, shuffled)).item()) < 1e-9);
  }

  TEST_CASE("symmetric under permutation within each set") {
    const Tensor f = random_tensor({4, 3}, 5), t = random_tensor({5, 3}, 6);
    std::vector<double> fp, tp;
    for (std::size_t r : {2, 0, 3, 1})
      for (std::size_t k = 0; k < 3; ++k) fp.push_back(f[r * 3 + k]);
    for (std::size_t r : {4, 1, 0, 3, 2})
      for (std::size_t k = 0; k < 3; ++k) tp.push_back(t[r * 3 + k]);
    CHECK(loss_ed(f, t).item() ==
          doctest::Approx(loss_ed(Tensor({4, 3}, fp), Tensor({5, 3}, tp)).item()).epsilon(1e-12));
  }

  TEST_CASE("non-negative for equal set sizes") {
    for (std::uint64_t trial = 0; trial < 10000; ++trial) {
      const std::size_t n = 1 + trial % 5, c = 1 + (trial / 5) % 4;
      const double v = loss_ed(random_tensor({n, c}, 1000 + 2 * trial), random_tensor({n, c}, 1001 + 2 * trial)).item();
      if (v < -1e-9) {
        FAIL("negative energy distance " << v << " at trial " << trial);
      }
    }
  }

  TEST_CASE("matches twice the integrated squared CDF gap in one dimension") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      const std::size_t b = 1 + trial % 6, m = 1 + (trial * 7) % 9;
      const Tensor f = random_tensor({b, 1}, 2000 + trial), t = random_tensor({m, 1}, 3000 + trial);
      CHECK(loss_ed(f, t).item() == doctest::Approx(cramer_energy(values(f), values(t))).epsilon(1e-10));
    }
  }

  TEST_CASE("decreases along a monotone interpolation in one dimension") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      auto x = values(random_tensor({8, 1}, 4000 + trial));
      auto y = values(random_tensor({8, 1}, 5000 + trial));
      for (auto& v : y) v = 2.0 * v + 1.0;
      // Rank-matched pairs: each point slides toward its partner without
      // crossing another pair's path.
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      const Tensor target({8, 1}, y);
      double prev = std::numeric_limits<double>::infinity();
      for (int step = 0; step <= 100; ++step) {
        const double a = step / 100.0;
        std::vector<double> z(8);
        for (std::size_t i = 0; i < 8; ++i) z[i] = (1 - a) * x[i] + a * y[i];
        const double v = loss_ed(Tensor({8, 1}, z), target).item();
        CHECK(v <= prev + 1e-12);
        CHECK(v == doctest::Approx(cramer_energy(z, y)).epsilon(1e-9));
        prev = v;
      }
      CHECK(std::abs(prev) < 1e-12);
    }
  }

  TEST_CASE("targets receive no gradient") {
    Tensor f = random_tensor({3, 2}, 7, true);
    Tensor t = random_tensor({4, 2}, 8, true);
    loss_ed(f, t).backward();
    CHECK(f.has_grad());
    CHECK_FALSE(t.has_grad());
  }

  TEST_CASE("gradient check on 8x4 sets") {
    const Tensor f = random_tensor({8, 4}, 9, true), t = random_tensor({8, 4}, 10);
    CHECK(grad_check([&](const Tensor& x) { return loss_ed(x, t); }, f, 1e-3) < 1e-4);
    CHECK(grad_check([&](const Tensor& x) { return loss_ed(x, t); }, f, 1e-4) < 1e-4);
  }
}

TEST_SUITE("loss_kl") {
  TEST_CASE("examples") {
    CHECK(loss_kl(Tensor::zeros({3, 4}), Tensor::zeros({3, 4})).item() == 0.0);
    CHECK(loss_kl(Tensor({1, 1}, {1.0}), Tensor({1, 1}, {0.0})).item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(loss_kl(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  }

  TEST_CASE("non-negative and differentiable") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      CHECK(loss_kl(random_tensor({4, 3}, 100 + s), random_tensor({4, 3}, 200 + s)).item() >= 0.0);
    }
    const Tensor mu = random_tensor({3, 4}, 11, true), lv = random_tensor({3, 4}, 12, true);
    CHECK(grad_check([&](const Tensor& x) { return loss_kl(x, lv); }, mu, 1e-4) < 1e-4);
    CHECK(grad_check([&](const Tensor& x) { return loss_kl(mu, x); }, lv, 1e-4) < 1e-4);
  }
}

TEST_SUITE("modulation") {
  TEST_CASE("coefficient values") {
    CHECK(modulation_coefficient(0.0) == 2.0);
    CHECK(modulation_coefficient(1.0) == 1.0);
    CHECK(modulation_coefficient(3.0) == 0.5);
    CHECK(modulation_coefficient(1e12) < 1e-11);
    double prev = 2.0;
    for (int i = 1; i <= 100; ++i) {
      const double w = modulation_coefficient(0.05 * i);
      CHECK(w < prev);
      CHECK(w > 0.0);
      prev = w;
    }
    CHECK_THROWS_AS(modulation_coefficient(-0.1), ParameterError);
  }

  TEST_CASE("per-sample RMSE and confidence") {
    const Tensor truth = Tensor::zeros({2, 3, 2, 2});
    std::vector<double> pred(24, 0.0);
    for (std::size_t i = 12; i < 24; ++i) pred[i] = (i % 2 == 0) ? 3.0 : -3.0;
    const auto w = modulation_weight(truth, Tensor({2, 3, 2, 2}, pred));
    REQUIRE(w.size() == 2);
    CHECK(w[0].d == 0.0);
    CHECK(w[0].w == 2.0);
    CHECK(std::isinf(w[0].confidence));
    CHECK(w[1].d == 3.0);
    CHECK(w[1].w == 0.5);
    CHECK(w[1].confidence == doctest::Approx(1.0 / 3.0));
  }
}

TEST_SUITE("loss_sr") {
  TEST_CASE("examples") {
    const Tensor hr = random_tensor({2, 3, 4, 4}, 13);
    CHECK(loss_sr(hr, hr, {2.0, 0.7}).item() == 0.0);

    const Tensor zeros = Tensor::zeros({2, 1, 1, 2});
    CHECK(loss_sr(Tensor({1, 1, 1, 2}, {0.1, -0.1}), Tensor::zeros({1, 1, 1, 2}), {2.0}).item() ==
          doctest::Approx(0.2).epsilon(1e-15));
    const Tensor sr({2, 1, 1, 2}, {0.1, 0.1, 0.3, -0.3});
    CHECK(loss_sr(sr, zeros, {2.0, 1.0}).item() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(loss_sr(sr, zeros).item() == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(loss_sr(sr, Tensor::zeros({2, 1, 2, 1})), DimensionError);
    CHECK_THROWS_AS(loss_sr(sr, zeros, {1.0}), DimensionError);
    CHECK_THROWS_AS(loss_sr(sr, zeros, {1.0, 0.0}), ParameterError);
  }

  TEST_CASE("weights scale the gradient and carry none themselves") {
    Tensor sr1 = random_tensor({2, 3, 2, 2}, 14, true);
    Tensor sr2 = sr1.clone();
    const Tensor hr = random_tensor({2, 3, 2, 2}, 15);
    loss_sr(sr1, hr, {1.0, 1.0}).backward();
    loss_sr(sr2, hr, {2.0, 0.5}).backward();
    for (std::size_t i = 0; i < 12; ++i) CHECK(sr2.grad()[i] == doctest::Approx(2.0 * sr1.grad()[i]));
    for (std::size_t i = 12; i < 24; ++i) CHECK(sr2.grad()[i] == doctest::Approx(0.5 * sr1.grad()[i]));
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("all losses pass a finite-difference check at h = 1e-4") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Tensor a = random_tensor({3, 2, 2, 2}, 300 + s, true), b = random_tensor({3, 2, 2, 2}, 400 + s);
      const Tensor f = random_tensor({6, 5}, 500 + s, true), t = random_tensor({8, 5}, 600 + s);
      CHECK(grad_check([&](const Tensor& x) { return loss_rd(b, x); }, a, 1e-4) < 1e-4);
      CHECK(grad_check([&](const Tensor& x) { return loss_sr(x, b, {1.5, 0.5, 1.0}); }, a, 1e-4) < 1e-4);
      CHECK(grad_check([&](const Tensor& x) { return loss_ed(x, t); }, f, 1e-4) < 1e-4);
    }
  }
}

TEST_SUITE("total_loss") {
  TEST_CASE("weighting") {
    LossComponents c;
    c.ed = Tensor::scalar(1.0);
    c.rd = Tensor::scalar(1.0);
    c.sr = Tensor::scalar(1.0);
    const LossWeights w;
    CHECK(total_loss(c, w).item() == doctest::Approx(2.01).epsilon(1e-15));
    LossWeights no_ed = w;
    no_ed.use_ed = false;
    CHECK(total_loss(c, no_ed).item() == 2.0);

    LossComponents zero;
    zero.ed = Tensor::scalar(0.0);
    zero.rd = Tensor::scalar(0.0);
    zero.sr = Tensor::scalar(0.0);
    CHECK(total_loss(zero, w).item() == 0.0);
  }

  TEST_CASE("kl replaces ed with the same weight") {
    LossComponents c;
    c.kl = Tensor::scalar(3.0);
    c.rd = Tensor::scalar(1.0);
    c.sr = Tensor::scalar(1.0);
    LossWeights w;
    w.use_ed = false;
    w.kl_substitute = true;
    CHECK(total_loss(c, w).item() == doctest::Approx(2.03).epsilon(1e-15));
  }

  TEST_CASE("toggle validation") {
    LossWeights w;
    w.kl_substitute = true;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = {};
    w.use_rd = false;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w.modulated_sr = false;
    CHECK_NOTHROW(w.validate());
    w = {};
    w.use_rd = w.use_ed = w.use_sr = w.modulated_sr = false;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    LossComponents none;
    CHECK_THROWS_AS(total_loss(none, w), ConfigError);
    w.lambda1 = -1.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
  }
}
