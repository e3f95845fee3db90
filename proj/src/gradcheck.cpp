#include "redsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "redsr/errors.hpp"

namespace redsr {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("grad_check: step must be positive");
  Tensor probe = x.detach();
  probe.set_requires_grad(true);
  const Tensor y = f(probe);
  if (y.size() != 1) {
    throw ParameterError("grad_check: function must be scalar-valued, got " +
                         shape_str(y.shape()));
  }
  y.backward();
  std::vector<double> analytic(x.size(), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  double worst = 0.0;
  Tensor shifted = x.detach();
  auto values = shifted.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f(shifted).item();
    values[i] = orig - h;
    const double down = f(shifted).item();
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace redsr
