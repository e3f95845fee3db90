#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "redsr/adam.hpp"
#include "redsr/degradation.hpp"
#include "redsr/losses.hpp"
#include "redsr/models.hpp"

namespace redsr {

struct TrainConfig {
  // Batch construction
  std::size_t batch_slots = 8;
  std::size_t lr_patch = 32;
  std::size_t scale = 2;
  DegradationMode degradation_mode = DegradationMode::kIsotropic;
  /// When non-empty, isotropic widths are drawn uniformly from this set
  /// instead of from the continuous training range.
  std::vector<double> iso_widths;

  // Losses
  std::size_t target_samples = 64;
  double lambda1 = 0.01;
  bool loss_rd = true;
  bool loss_ed = true;
  TargetKind ed_target = TargetKind::kGaussian;
  bool kl_substitute = false;
  bool modulated_sr = true;

  // Schedule
  std::size_t epochs = 20;
  std::size_t iterations_per_epoch = 100;
  double initial_lr = 1e-4;
  std::size_t schedule_period = 7;  // epochs between learning-rate halvings
  std::size_t checkpoint_every = 500;

  // Seeds
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t noise_seed = 3;
  std::uint64_t target_seed = 4;

  // Network widths (the rest of Architecture keeps its defaults)
  std::size_t repr_dim = 16;
  std::size_t degrader_width = 32;
  std::size_t degrader_blocks = 4;
  std::size_t generator_width = 32;
  std::size_t generator_blocks = 4;

  // Bundled synthetic dataset
  std::size_t synthetic_count = 48;
  std::size_t synthetic_size = 192;
  std::uint64_t synthetic_seed = 7;
  /// Directory of PPM/PGM images; empty selects the synthetic dataset.
  std::string hr_dir;

  /// Writes measured milliseconds into the `ms` log column. Off by default so
  /// logs of identical runs are byte-identical (the column then holds 0).
  bool log_wall_time = false;

  std::uint64_t total_steps() const { return epochs * iterations_per_epoch; }
  Architecture architecture() const;
  LossWeights loss_weights() const;
  /// ConfigError on invalid counts or toggle combinations.
  void validate() const;

  nlohmann::json to_json() const;
  /// Flat keys mirroring the field names; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  /// Overlays the keys present in `j` onto this config.
  void merge_json(const nlohmann::json& j);
};

struct CropRect {
  std::size_t y = 0, x = 0, h = 0, w = 0;
  bool overlaps(const CropRect& o) const;
};

/// Slot i of both groups shares one HR source image and one degradation.
/// Group B (crop 1) feeds the encoder and generator; group A (crop 2) is the
/// degrader's reproduction target.
struct Batch {
  Tensor hr_a, lr_a;  // [n,3,P,P], [n,3,p,p]
  Tensor hr_b, lr_b;
  std::vector<DegradationSpec> specs;
  std::vector<std::size_t> image_index;
  std::vector<CropRect> crops_a, crops_b;
};

/// Images that can hold two disjoint HR patches; others are reported on
/// stderr and skipped. Throws ParameterError if none remain.
std::vector<Image> usable_images(const std::vector<Image>& images, const TrainConfig& config);

/// Content depends only on (config seeds, step).
Batch build_batch(const std::vector<Image>& images, const TrainConfig& config, std::uint64_t step);

struct StepOptions {
  /// Overrides the per-sample RMSE used for the modulation weight.
  std::optional<double> force_rmse;
};

struct StepLosses {
  LossComponents components;
  Tensor total;
  double mean_w = 1.0;
};

/// Forward pass and loss assembly for one batch. The degrader runs only when
/// L_RD is enabled.
StepLosses forward_losses(const Model& model, const Batch& batch, const TrainConfig& config,
                          std::uint64_t step, const StepOptions& options = {});

/// Parameters that receive gradient under `config`.
ParamMap trainable_params(const Model& model, const TrainConfig& config);

struct TrainRecord {
  std::uint64_t step = 0;
  double loss_rd = 0.0;
  double loss_ed = 0.0;  // holds L_KL when kl_substitute is on
  double loss_sr = 0.0;
  double loss_total = 0.0;
  double mean_w = 1.0;
  double lr = 0.0;
  double ms = 0.0;
};

inline constexpr const char* kLogHeader = "step,loss_rd,loss_ed,loss_sr,loss_total,mean_w,lr,ms";
std::string format_record(const TrainRecord& r);

/// initial_lr / 2^floor(epoch / schedule_period).
double learning_rate_at(const TrainConfig& config, std::uint64_t step);

/// One Adam step on the total loss. Throws NumericError with the step index
/// and component losses if anything goes non-finite.
TrainRecord train_step(Model& model, Adam& adam, const Batch& batch, const TrainConfig& config,
                       std::uint64_t step);

struct TrainResult {
  Model model;
  std::vector<TrainRecord> log;
  std::filesystem::path final_checkpoint;
};

/// Runs all steps, writing log.csv, ckpt_<step>.rdck every checkpoint_every
/// steps and final.rdck. With `resume`, continues from that checkpoint and
/// keeps the earlier rows of an existing log.csv.
TrainResult train(const TrainConfig& config, const std::vector<Image>& images,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Images named by config.hr_dir, or the synthetic dataset.
std::vector<Image> load_training_images(const TrainConfig& config);

}  // namespace redsr
