#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "redsr/degradation.hpp"
#include "redsr/image.hpp"
#include "redsr/models.hpp"

namespace redsr {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1/MSE) over the full image, capped at 100 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);
double rmse(const Image& a, const Image& b);
/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, valid positions only. RGB inputs are reduced to luma first.
double ssim(const Image& a, const Image& b);

struct ClusterReport {
  std::size_t num_labels = 0;
  /// Leave-one-out nearest-centroid accuracy.
  double accuracy = 0.0;
  double silhouette = 0.0;
  /// Row-major num_labels x num_labels centroid distances.
  std::vector<double> centroid_distances;
  std::vector<int> label_ids;  // sorted distinct labels, row order of the matrix
};

/// reps [n, C] with one integer label per row. Needs >= 2 labels with >= 2
/// samples each; ParameterError when the silhouette is undefined.
ClusterReport cluster_report(const Tensor& reps, const std::vector<int>& labels);

/// Encoder outputs [n, C_repr] for a list of equally sized LR images.
Tensor representations(const Model& model, const std::vector<Image>& lr);

struct ProbeSet {
  std::vector<Image> lr;
  std::vector<int> labels;  // index into the spec list
};

/// `per_spec` random crops per spec, each taken from a pool image chosen at
/// random and degraded with that spec. Fully determined by `seed`.
ProbeSet make_probe_set(const std::vector<Image>& hr_pool,
                        const std::vector<DegradationSpec>& specs, std::size_t per_spec,
                        std::size_t lr_patch, std::uint64_t seed);

/// reps.rdt plus labels.csv (`index,label`).
void export_representations(const std::filesystem::path& dir, const Tensor& reps,
                            const std::vector<int>& labels);

struct SweepResult {
  std::vector<double> psnr;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
};

/// Super-resolves one fixed LR target (a crop of hr_pool[0]) using the
/// representation of each of the first n_contents pool images degraded with
/// the same spec. The target's own representation is entry 0. Crops are HR
/// patches of lr_patch * scale pixels taken at the image centre.
SweepResult robustness_sweep(const Model& model, const std::vector<Image>& hr_pool,
                             const DegradationSpec& spec, std::size_t n_contents,
                             std::size_t lr_patch, std::uint64_t noise_seed);

/// Encodes an LR image, super-resolves it and clamps the result to [0,1].
Image super_resolve(const Model& model, const Image& lr);

}  // namespace redsr
