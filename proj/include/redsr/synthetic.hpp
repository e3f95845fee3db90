#pragma once

#include <cstdint>
#include <vector>

#include "redsr/image.hpp"

namespace redsr {

/// Seeded RGB test content: smooth low-frequency colour fields overlaid with
/// hard-edged shapes and short-period gratings, so that blur strength is
/// visible in every crop. Values in [0,1].
Image synthetic_texture(std::size_t size, std::uint64_t seed);

/// `count` textures; texture i is synthetic_texture(size, stream(seed, i)).
std::vector<Image> synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace redsr
