#pragma once

#include <functional>

#include "redsr/tensor.hpp"

namespace redsr {

/// Central finite differences against the reverse-mode gradient of a scalar
/// function. Returns max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8).
/// `f` must not capture `x`; it receives a fresh tensor on every call.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace redsr
