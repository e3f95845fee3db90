#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "redsr/tensor.hpp"

namespace redsr {

using Rng = std::mt19937_64;

/// Independent stream keyed by a base seed plus stream coordinates such as
/// (purpose, step, slot). Same key -> same stream.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

/// Fan-in scaled normal init, N(0, 2/fan_in).
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace redsr
