#include "redsr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "redsr/random.hpp"

namespace redsr {

Image synthetic_texture(std::size_t size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double n = static_cast<double>(size);
  constexpr double kTau = 2.0 * std::numbers::pi;
  Image img(size, size, 3);

  // Smooth background: a few low-frequency plane waves per channel.
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = 0.25 + 0.5 * u01(rng);
    for (int wave = 0; wave < 4; ++wave) {
      const double fx = (u01(rng) * 3.0 - 1.5) / n, fy = (u01(rng) * 3.0 - 1.5) / n;
      const double phase = kTau * u01(rng), amp = 0.08 * u01(rng);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          img.at(c, y, x) += amp * std::cos(kTau * (fx * x + fy * y) + phase);
    }
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) img.at(c, y, x) += base;
  }

  // Hard-edged shapes and gratings.
  const int shapes = 10 + static_cast<int>(u01(rng) * 8);
  for (int k = 0; k < shapes; ++k) {
    const int kind = static_cast<int>(u01(rng) * 3.0);
    const double cx = u01(rng) * n, cy = u01(rng) * n;
    const double r = n * (0.05 + 0.15 * u01(rng));
    const double colour[3] = {u01(rng), u01(rng), u01(rng)};
    const double period = 3.0 + 6.0 * u01(rng), orient = std::numbers::pi * u01(rng);
    const double gx = std::cos(orient) / period, gy = std::sin(orient) / period;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = x - cx, dy = y - cy;
        bool inside = false;
        double alpha = 1.0;
        if (kind == 0) {
          inside = dx * dx + dy * dy <= r * r;
        } else if (kind == 1) {
          inside = std::abs(dx) <= r && std::abs(dy) <= 0.6 * r;
        } else {
          inside = std::abs(dx) <= 1.2 * r && std::abs(dy) <= 1.2 * r;
          alpha = std::cos(kTau * (gx * x + gy * y)) > 0.0 ? 1.0 : 0.0;
        }
        if (!inside || alpha == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = colour[c];
      }
    }
  }
  for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<Image> synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng key = make_rng(seed, {0x5e7, i});
    out.push_back(synthetic_texture(size, key()));
  }
  return out;
}

}  // namespace redsr
