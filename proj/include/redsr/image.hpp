#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "redsr/tensor.hpp"

namespace redsr {

/// Planar (channel-major) image. Values are nominally in [0,1]; they are only
/// clamped when written to 8-bit files.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // [channels][height][width]

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), values(h * w * c, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }

  Image crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;
};

/// Stacks equally sized images into [N,C,H,W].
Tensor to_batch(const std::vector<Image>& images);
/// Splits a [N,C,H,W] tensor back into images.
std::vector<Image> from_batch(const Tensor& batch);

/// Reads binary PPM (P6) or PGM (P5), 8-bit.
Image read_pnm(const std::filesystem::path& path);
/// Writes P6 for 3 channels, P5 for 1; values clamped to [0,1] and rounded.
void write_pnm(const std::filesystem::path& path, const Image& img);

}  // namespace redsr
