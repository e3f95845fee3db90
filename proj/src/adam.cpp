#include "redsr/adam.hpp"

#include <cmath>

#include "redsr/errors.hpp"

namespace redsr {

namespace {

void validate(const AdamConfig& c) {
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0)) throw ParameterError("adam: beta1 must lie in (0,1)");
  if (!(c.beta2 > 0.0 && c.beta2 < 1.0)) throw ParameterError("adam: beta2 must lie in (0,1)");
  if (!(c.epsilon > 0.0)) throw ParameterError("adam: epsilon must be positive");
  if (!(c.learning_rate > 0.0)) throw ParameterError("adam: learning rate must be positive");
}

}  // namespace

Adam::Adam(AdamConfig config) : config_(config) { validate(config_); }

void Adam::set_learning_rate(double lr) {
  AdamConfig c = config_;
  c.learning_rate = lr;
  validate(c);
  config_ = c;
}

void Adam::restore(std::uint64_t step_count, std::map<std::string, Moments> moments) {
  step_count_ = step_count;
  moments_ = std::move(moments);
}

void Adam::step(ParamMap& params) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw StateError("adam: parameter '" + name + "' has no gradient");
    auto it = moments_.find(name);
    if (it != moments_.end() && it->second.first.size() != p.size()) {
      throw StateError("adam: moment buffer for '" + name + "' does not match parameter shape");
    }
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, p] : params) {
    auto& m = moments_[name];
    if (m.first.empty()) {
      m.first.assign(p.size(), 0.0);
      m.second.assign(p.size(), 0.0);
    }
    auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m.first[i] = config_.beta1 * m.first[i] + (1.0 - config_.beta1) * g[i];
      m.second[i] = config_.beta2 * m.second[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m.first[i] / bc1;
      const double vhat = m.second[i] / bc2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    require_finite(w, name.c_str());
    p.zero_grad();
  }
}

}  // namespace redsr
