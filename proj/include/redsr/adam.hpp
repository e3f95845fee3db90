#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "redsr/tensor.hpp"

namespace redsr {

/// Named trainable tensors. std::map keeps iteration order deterministic.
using ParamMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are keyed by parameter name and created on
/// first use.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Updates every tensor in `params` from its grad, then clears the grads.
  /// Throws StateError if a parameter has no grad or a moment buffer has the
  /// wrong length.
  void step(ParamMap& params);

  void set_learning_rate(double lr);
  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }

  // Exposed for checkpointing.
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t step_count, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace redsr
