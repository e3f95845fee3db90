#include "redsr/selftest.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "redsr/gradcheck.hpp"
#include "redsr/losses.hpp"
#include "redsr/ops.hpp"
#include "redsr/random.hpp"

namespace redsr {

namespace {

Tensor randn(Shape shape, Rng& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

}  // namespace

std::vector<SelfCheck> run_selftest() {
  constexpr double h = 1e-4, tol = 1e-4;
  std::vector<SelfCheck> out;
  Rng rng = make_rng(0x5e1f);
  const Tensor a = randn({3, 4}, rng), b = randn({3, 4}, rng), pts = randn({5, 4}, rng);
  const Tensor img = randn({2, 3, 6, 6}, rng), w = randn({4, 3, 3, 3}, rng), bias = randn({4}, rng);
  const Tensor lw = randn({5, 4}, rng), lb = randn({5}, rng);
  const Tensor gam = randn({2, 3}, rng), bet = randn({2, 3}, rng);
  const Tensor f = randn({6, 5}, rng), t = randn({8, 5}, rng);
  const Tensor mu = randn({4, 3}, rng), lv = randn({4, 3}, rng);

  // Weighted sum with fixed coefficients turns any output into a scalar.
  auto P = [](const Tensor& y) {
    Rng r = make_rng(0x9e);
    return ops::sum(ops::mul(y, randn(y.shape(), r, false)));
  };
  auto grad = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& fn, const Tensor& x) {
    const double e = grad_check(fn, x, h);
    out.push_back({"grad " + name, e, tol, e < tol});
  };
  grad("add", [&](const Tensor& x) { return P(ops::add(x, b)); }, a);
  grad("sub", [&](const Tensor& x) { return P(ops::sub(b, x)); }, a);
  grad("mul", [&](const Tensor& x) { return P(ops::mul(x, x)); }, a);
  grad("scale", [&](const Tensor& x) { return P(ops::scale(x, -1.7)); }, a);
  grad("add_scalar", [&](const Tensor& x) { return P(ops::add_scalar(x, 0.3)); }, a);
  grad("leaky_relu", [&](const Tensor& x) { return P(ops::leaky_relu(x, 0.1)); }, a);
  grad("exp", [&](const Tensor& x) { return P(ops::exp(x)); }, a);
  grad("square", [&](const Tensor& x) { return P(ops::square(x)); }, a);
  grad("mean", [&](const Tensor& x) { return ops::mean(x); }, a);
  grad("l1_mean", [&](const Tensor& x) { return ops::l1_mean(x, b); }, a);
  grad("l1_per_sample", [&](const Tensor& x) { return P(ops::l1_per_sample(x, b)); }, a);
  grad("pairwise_l2", [&](const Tensor& x) { return P(ops::pairwise_l2(x, pts)); }, a);
  grad("linear", [&](const Tensor& x) { return P(ops::linear(a, x, lb)); }, lw);
  grad("conv2d input", [&](const Tensor& x) { return P(ops::conv2d(x, w, bias, 1, 1)); }, img);
  grad("conv2d weight", [&](const Tensor& x) { return P(ops::conv2d(img, x, bias, 2, 1)); }, w);
  grad("global_avg_pool", [&](const Tensor& x) { return P(ops::global_avg_pool(x)); }, img);
  grad("decimate", [&](const Tensor& x) { return P(ops::decimate(x, 2)); }, img);
  grad("nn_upsample", [&](const Tensor& x) { return P(ops::nn_upsample(x, 2)); }, img);
  grad("channel_affine", [&](const Tensor& x) { return P(ops::channel_affine(img, x, bet)); }, gam);
  grad("loss_rd", [&](const Tensor& x) { return loss_rd(img.detach(), x); }, img);
  grad("loss_ed", [&](const Tensor& x) { return loss_ed(x, t); }, f);
  grad("loss_sr", [&](const Tensor& x) { return loss_sr(x, img.detach(), {1.5, 0.5}); }, img);
  grad("loss_kl", [&](const Tensor& x) { return loss_kl(mu, x); }, lv);

  auto exact = [&](const std::string& name, double got, double want, double eps) {
    const double e = std::abs(got - want);
    out.push_back({name, e, eps, e <= eps});
  };
  exact("ed(X,X) = 0", loss_ed(f, f).item(), 0.0, 1e-9);
  exact("ed({0},{3}) = 6", loss_ed(Tensor({1, 1}, {0.0}), Tensor({1, 1}, {3.0})).item(), 6.0, 0.0);
  exact("ed({0,0},{1,1}) = 2", loss_ed(Tensor({2, 1}, {0.0, 0.0}), Tensor({2, 1}, {1.0, 1.0})).item(), 2.0, 0.0);
  exact("kl(1,0) = 0.5", loss_kl(Tensor({1, 1}, {1.0}), Tensor({1, 1}, {0.0})).item(), 0.5, 1e-15);
  exact("W(0) = 2", modulation_coefficient(0.0), 2.0, 0.0);
  exact("W(1) = 1", modulation_coefficient(1.0), 1.0, 0.0);
  exact("W(3) = 0.5", modulation_coefficient(3.0), 0.5, 0.0);
  LossComponents c;
  c.ed = Tensor::scalar(1.0);
  c.rd = Tensor::scalar(1.0);
  c.sr = Tensor::scalar(1.0);
  exact("total(1,1,1) = 2.01", total_loss(c, LossWeights{}).item(), 2.01, 1e-15);
  return out;
}

}  // namespace redsr
