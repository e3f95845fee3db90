#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "redsr/image.hpp"
#include "redsr/random.hpp"

// Synthetic degradation I_lr = (I_hr (x) k) decimated by s, plus Gaussian
// noise. Kernels are rotated anisotropic Gaussians on a fixed 21x21 grid.
namespace redsr {

inline constexpr std::size_t kKernelSize = 21;
inline constexpr std::size_t kKernelCenter = 10;

// Training ranges.
inline constexpr double kSigmaMin = 0.2;
inline constexpr double kSigmaMax = 4.0;
inline constexpr double kNoiseMax = 25.0;

struct DegradationSpec {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double theta = 0.0;        // radians, [0, pi)
  double noise_level = 0.0;  // std on the 0-255 scale
  std::size_t scale = 2;

  bool operator==(const DegradationSpec&) const = default;
};

struct BlurKernel {
  std::array<double, kKernelSize * kKernelSize> weights{};

  double at(std::size_t row, std::size_t col) const { return weights[row * kKernelSize + col]; }
};

enum class DegradationMode { kIsotropic, kAnisotropic, kAnisotropicNoise };

DegradationMode parse_mode(const std::string& name);
std::string mode_name(DegradationMode mode);

/// weights(row, col) ~ exp(-0.5 p^T Sigma^-1 p), p = (col-10, row-10),
/// Sigma = R(theta) diag(sigma1^2, sigma2^2) R(theta)^T, normalized to sum 1.
BlurKernel make_kernel(const DegradationSpec& spec);

/// Blur with reflective borders, decimate by spec.scale, add N(0, noise/255)
/// seeded by `noise_seed`. No clamping.
Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t noise_seed);

DegradationSpec sample_spec(Rng& rng, DegradationMode mode, std::size_t scale = 2);

struct ManifestEntry {
  std::size_t id = 0;
  DegradationSpec spec;
  std::string hr_file;
  std::string lr_file;
  std::uint64_t noise_seed = 0;
};

struct DatasetOptions {
  std::size_t count = 0;
  DegradationMode mode = DegradationMode::kAnisotropicNoise;
  std::uint64_t seed = 0;
  std::size_t lr_patch = 32;
  std::size_t scale = 2;
};

/// Writes hr_<id>.rdt / lr_<id>.rdt patch pairs plus manifest.json into
/// `out_dir`. Sample i depends only on (seed, i) and the sorted image list.
std::vector<ManifestEntry> gen_dataset(const std::filesystem::path& hr_dir,
                                       const DatasetOptions& options,
                                       const std::filesystem::path& out_dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Lists *.ppm / *.pgm files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace redsr
