#pragma once

#include <string>
#include <vector>

namespace redsr {

struct SelfCheck {
  std::string name;
  double value = 0.0;  // error, or the quantity compared against `limit`
  double limit = 0.0;
  bool pass = false;
};

/// Finite-difference gradient checks of every differentiable op and loss,
/// plus the closed-form loss identities. Deterministic.
std::vector<SelfCheck> run_selftest();

}  // namespace redsr
