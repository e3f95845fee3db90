#include "redsr/losses.hpp"

#include <cmath>
#include <limits>

#include "redsr/errors.hpp"
#include "redsr/ops.hpp"

namespace redsr {

Tensor loss_rd(const Tensor& lr_true, const Tensor& lr_pred) {
  return ops::l1_mean(lr_pred, lr_true);
}

TargetKind parse_target(const std::string& name) {
  if (name == "gaussian") return TargetKind::kGaussian;
  if (name == "uniform") return TargetKind::kUniform;
  if (name == "exponential") return TargetKind::kExponential;
  throw ConfigError("unknown target distribution '" + name +
                    "' (expected gaussian, uniform, exponential)");
}

std::string target_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::kGaussian: return "gaussian";
    case TargetKind::kUniform: return "uniform";
    case TargetKind::kExponential: return "exponential";
  }
  return "unknown";
}

Tensor sample_targets(TargetKind kind, std::size_t dim, std::size_t m, Rng& rng) {
  if (m == 0) throw ParameterError("sample_targets: need at least one sample");
  if (dim == 0) throw ParameterError("sample_targets: zero dimension");
  std::vector<double> v(m * dim);
  switch (kind) {
    case TargetKind::kGaussian: {
      std::normal_distribution<double> d(0.0, 1.0);
      for (auto& x : v) x = d(rng);
      break;
    }
    case TargetKind::kUniform: {
      const double a = std::sqrt(3.0);
      std::uniform_real_distribution<double> d(-a, a);
      for (auto& x : v) x = d(rng);
      break;
    }
    case TargetKind::kExponential: {
      std::exponential_distribution<double> d(1.0);
      for (auto& x : v) x = d(rng) - 1.0;
      break;
    }
  }
  return Tensor({m, dim}, std::move(v));
}

Tensor sample_targets(const TargetDistribution& dist, std::size_t m) {
  Rng rng = make_rng(dist.seed);
  return sample_targets(dist.kind, dist.dim, m, rng);
}

Tensor loss_ed(const Tensor& f, const Tensor& t) {
  if (f.rank() != 2 || t.rank() != 2 || f.dim(1) != t.dim(1)) {
    throw DimensionError("loss_ed: representations " + shape_str(f.shape()) + " vs targets " +
                         shape_str(t.shape()));
  }
  const Tensor targets = t.detach();
  const double b = static_cast<double>(f.dim(0)), m = static_cast<double>(t.dim(0));
  const Tensor cross = ops::sum(ops::pairwise_l2(f, targets));
  const Tensor self = ops::sum(ops::pairwise_l2(f, f));
  const Tensor target_pairs = ops::pairwise_l2(targets, targets);
  double target_self = 0.0;
  for (double d : target_pairs.data()) target_self += d;
  const Tensor out = ops::sub(ops::scale(cross, 2.0 / (b * m)), ops::scale(self, 1.0 / (b * b)));
  return ops::add_scalar(out, -target_self / (m * m));
}

Tensor loss_kl(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape() || mu.rank() != 2) {
    throw DimensionError("loss_kl: mu " + shape_str(mu.shape()) + " vs logvar " +
                         shape_str(logvar.shape()));
  }
  // 0.5 * sum(exp(lv) + mu^2 - 1 - lv) / b
  const Tensor inner = ops::sub(ops::add(ops::exp(logvar), ops::square(mu)), logvar);
  const double b = static_cast<double>(mu.dim(0));
  return ops::scale(ops::add_scalar(ops::sum(inner), -static_cast<double>(mu.size())), 0.5 / b);
}

double modulation_coefficient(double d) {
  if (!(d >= 0.0)) throw ParameterError("modulation_coefficient: RMSE must be non-negative");
  return 2.0 / (1.0 + d);
}

std::vector<ConfidenceWeight> modulation_weight(const Tensor& lr_true, const Tensor& lr_pred) {
  if (lr_true.shape() != lr_pred.shape() || lr_true.rank() < 2) {
    throw DimensionError("modulation_weight: shapes " + shape_str(lr_true.shape()) + " and " +
                         shape_str(lr_pred.shape()));
  }
  const std::size_t n = lr_true.dim(0), per = lr_true.size() / n;
  auto a = lr_true.data();
  auto b = lr_pred.data();
  std::vector<ConfidenceWeight> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double diff = a[i * per + j] - b[i * per + j];
      s += diff * diff;
    }
    auto& cw = out[i];
    cw.d = std::sqrt(s / static_cast<double>(per));
    cw.confidence = cw.d > 0.0 ? 1.0 / cw.d : std::numeric_limits<double>::infinity();
    cw.w = modulation_coefficient(cw.d);
  }
  return out;
}

Tensor loss_sr(const Tensor& sr, const Tensor& hr, const std::vector<double>& w) {
  if (sr.shape() != hr.shape()) {
    throw DimensionError("loss_sr: shapes " + shape_str(sr.shape()) + " and " +
                         shape_str(hr.shape()));
  }
  const Tensor per_sample = ops::l1_per_sample(sr, hr);
  if (w.size() != per_sample.size()) {
    throw DimensionError("loss_sr: " + std::to_string(w.size()) + " weights for batch of " +
                         std::to_string(per_sample.size()));
  }
  for (double v : w) {
    if (!(v > 0.0)) throw ParameterError("loss_sr: weights must be positive");
  }
  const Tensor weights({w.size()}, w);
  return ops::mean(ops::mul(per_sample, weights));
}

Tensor loss_sr(const Tensor& sr, const Tensor& hr) {
  if (sr.rank() < 1) throw DimensionError("loss_sr: empty batch");
  return loss_sr(sr, hr, std::vector<double>(sr.dim(0), 1.0));
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0)) throw ConfigError("lambda1 must be non-negative");
  if (kl_substitute && use_ed) {
    throw ConfigError("kl_substitute and loss_ed are mutually exclusive: the KL term replaces the "
                      "energy-distance term");
  }
  if (modulated_sr && !use_rd) {
    throw ConfigError("modulated_sr requires loss_rd: the modulation weight is computed from the "
                      "re-degraded LR image");
  }
  if (modulated_sr && !use_sr) throw ConfigError("modulated_sr requires the SR loss");
  if (!use_rd && !use_ed && !use_sr && !kl_substitute) {
    throw ConfigError("all loss components are disabled");
  }
}

Tensor total_loss(const LossComponents& c, const LossWeights& weights) {
  std::optional<Tensor> acc;
  auto accumulate = [&](const std::optional<Tensor>& term, bool enabled, double factor,
                        const char* name) {
    if (!enabled) return;
    if (!term) throw ConfigError(std::string("total_loss: enabled component ") + name + " missing");
    const Tensor scaled = factor == 1.0 ? *term : ops::scale(*term, factor);
    acc = acc ? ops::add(*acc, scaled) : scaled;
  };
  accumulate(c.ed, weights.use_ed, weights.lambda1, "L_ED");
  accumulate(c.kl, weights.kl_substitute, weights.lambda1, "L_KL");
  accumulate(c.rd, weights.use_rd, 1.0, "L_RD");
  accumulate(c.sr, weights.use_sr, 1.0, "L_SR");
  if (!acc) throw ConfigError("total_loss: all loss components are disabled");
  return *acc;
}

}  // namespace redsr
