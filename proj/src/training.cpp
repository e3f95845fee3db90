#include "redsr/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "redsr/errors.hpp"
#include "redsr/image.hpp"
#include "redsr/ops.hpp"
#include "redsr/synthetic.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace redsr {

// ---------------------------------------------------------------------------
// Config

Architecture TrainConfig::architecture() const {
  Architecture a;
  a.repr_dim = repr_dim;
  a.scale = scale;
  a.degrader_width = degrader_width;
  a.degrader_blocks = degrader_blocks;
  a.generator_width = generator_width;
  a.generator_blocks = generator_blocks;
  a.logvar_head = kl_substitute;
  return a;
}

LossWeights TrainConfig::loss_weights() const {
  LossWeights w;
  w.lambda1 = lambda1;
  w.use_rd = loss_rd;
  w.use_ed = loss_ed;
  w.use_sr = true;
  w.modulated_sr = modulated_sr;
  w.kl_substitute = kl_substitute;
  return w;
}

void TrainConfig::validate() const {
  if (batch_slots == 0) throw ConfigError("batch_slots must be positive");
  if (lr_patch < 16) throw ConfigError("lr_patch must be at least 16 (encoder input)");
  if (target_samples == 0) throw ConfigError("target_samples must be positive");
  if (iterations_per_epoch == 0) throw ConfigError("iterations_per_epoch must be positive");
  if (schedule_period == 0) throw ConfigError("schedule_period must be positive");
  if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
  for (double w : iso_widths) {
    if (!(w > 0.0)) throw ConfigError("iso_widths entries must be positive");
  }
  if (synthetic_count == 0 && hr_dir.empty()) throw ConfigError("synthetic_count must be positive");
  loss_weights().validate();
  architecture().validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_slots", batch_slots},
          {"lr_patch", lr_patch},
          {"scale", scale},
          {"degradation_mode", mode_name(degradation_mode)},
          {"iso_widths", iso_widths},
          {"target_samples", target_samples},
          {"lambda1", lambda1},
          {"loss_rd", loss_rd},
          {"loss_ed", loss_ed},
          {"ed_target", target_name(ed_target)},
          {"kl_substitute", kl_substitute},
          {"modulated_sr", modulated_sr},
          {"epochs", epochs},
          {"iterations_per_epoch", iterations_per_epoch},
          {"initial_lr", initial_lr},
          {"schedule_period", schedule_period},
          {"checkpoint_every", checkpoint_every},
          {"init_seed", init_seed},
          {"data_seed", data_seed},
          {"noise_seed", noise_seed},
          {"target_seed", target_seed},
          {"repr_dim", repr_dim},
          {"degrader_width", degrader_width},
          {"degrader_blocks", degrader_blocks},
          {"generator_width", generator_width},
          {"generator_blocks", generator_blocks},
          {"synthetic_count", synthetic_count},
          {"synthetic_size", synthetic_size},
          {"synthetic_seed", synthetic_seed},
          {"hr_dir", hr_dir},
          {"log_wall_time", log_wall_time}};
}

void TrainConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const auto known = to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  };
  get("batch_slots", batch_slots);
  get("lr_patch", lr_patch);
  get("scale", scale);
  if (j.contains("degradation_mode")) {
    std::string m;
    get("degradation_mode", m);
    degradation_mode = parse_mode(m);
  }
  get("iso_widths", iso_widths);
  get("target_samples", target_samples);
  get("lambda1", lambda1);
  get("loss_rd", loss_rd);
  get("loss_ed", loss_ed);
  if (j.contains("ed_target")) {
    std::string t;
    get("ed_target", t);
    ed_target = parse_target(t);
  }
  get("kl_substitute", kl_substitute);
  get("modulated_sr", modulated_sr);
  get("epochs", epochs);
  get("iterations_per_epoch", iterations_per_epoch);
  get("initial_lr", initial_lr);
  get("schedule_period", schedule_period);
  get("checkpoint_every", checkpoint_every);
  get("init_seed", init_seed);
  get("data_seed", data_seed);
  get("noise_seed", noise_seed);
  get("target_seed", target_seed);
  get("repr_dim", repr_dim);
  get("degrader_width", degrader_width);
  get("degrader_blocks", degrader_blocks);
  get("generator_width", generator_width);
  get("generator_blocks", generator_blocks);
  get("synthetic_count", synthetic_count);
  get("synthetic_size", synthetic_size);
  get("synthetic_seed", synthetic_seed);
  get("hr_dir", hr_dir);
  get("log_wall_time", log_wall_time);
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.merge_json(j);
  return c;
}

// ---------------------------------------------------------------------------
// Batches

bool CropRect::overlaps(const CropRect& o) const {
  return y < o.y + o.h && o.y < y + h && x < o.x + o.w && o.x < x + w;
}

namespace {

bool fits_two(const Image& img, std::size_t P) {
  return (img.width >= 2 * P && img.height >= P) || (img.height >= 2 * P && img.width >= P);
}

}  // namespace

std::vector<Image> usable_images(const std::vector<Image>& images, const TrainConfig& config) {
  const std::size_t P = config.lr_patch * config.scale;
  std::vector<Image> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (fits_two(images[i], P) && images[i].channels == 3) {
      out.push_back(images[i]);
    } else {
      std::cerr << "warning: skipping image " << i << " (" << images[i].height << "x"
                << images[i].width << "x" << images[i].channels
                << "): cannot hold two disjoint RGB " << P << "x" << P << " patches\n";
    }
  }
  if (out.empty()) throw ParameterError("no training image can hold two disjoint patches");
  return out;
}

Batch build_batch(const std::vector<Image>& images, const TrainConfig& config, std::uint64_t step) {
  if (images.empty()) throw ParameterError("build_batch: empty dataset");
  const std::size_t P = config.lr_patch * config.scale;
  Rng rng = make_rng(config.data_seed, {0xba7c, step});
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  Batch batch;
  std::vector<Image> hr_a, lr_a, hr_b, lr_b;
  for (std::size_t slot = 0; slot < config.batch_slots; ++slot) {
    const std::size_t idx = uniform(0, images.size() - 1);
    const Image& img = images[idx];
    if (!fits_two(img, P)) {
      throw ParameterError("build_batch: image " + std::to_string(idx) +
                           " cannot hold two disjoint patches");
    }

    DegradationSpec spec;
    if (!config.iso_widths.empty()) {
      const double w = config.iso_widths[uniform(0, config.iso_widths.size() - 1)];
      spec.sigma1 = spec.sigma2 = w;
      spec.scale = config.scale;
    } else {
      spec = sample_spec(rng, config.degradation_mode, config.scale);
    }

    // Split the image into two halves; one crop per half.
    const bool can_split_x = img.width >= 2 * P && img.height >= P;
    const bool can_split_y = img.height >= 2 * P && img.width >= P;
    const bool split_x = can_split_x && (!can_split_y || uniform(0, 1) == 0);
    CropRect first{0, 0, P, P}, second{0, 0, P, P};
    if (split_x) {
      const std::size_t half = img.width / 2;
      first.x = uniform(0, half - P);
      second.x = uniform(half, img.width - P);
      first.y = uniform(0, img.height - P);
      second.y = uniform(0, img.height - P);
    } else {
      const std::size_t half = img.height / 2;
      first.y = uniform(0, half - P);
      second.y = uniform(half, img.height - P);
      first.x = uniform(0, img.width - P);
      second.x = uniform(0, img.width - P);
    }
    if (uniform(0, 1) == 1) std::swap(first, second);

    const Image crop_b = img.crop(first.y, first.x, P, P);
    const Image crop_a = img.crop(second.y, second.x, P, P);
    const std::uint64_t seed_b = make_rng(config.noise_seed, {step, slot, 0})();
    const std::uint64_t seed_a = make_rng(config.noise_seed, {step, slot, 1})();
    lr_b.push_back(degrade(crop_b, spec, seed_b));
    lr_a.push_back(degrade(crop_a, spec, seed_a));
    hr_b.push_back(crop_b);
    hr_a.push_back(crop_a);
    batch.specs.push_back(spec);
    batch.image_index.push_back(idx);
    batch.crops_b.push_back(first);
    batch.crops_a.push_back(second);
  }
  batch.hr_a = to_batch(hr_a);
  batch.lr_a = to_batch(lr_a);
  batch.hr_b = to_batch(hr_b);
  batch.lr_b = to_batch(lr_b);
  return batch;
}

// ---------------------------------------------------------------------------
// Steps

StepLosses forward_losses(const Model& model, const Batch& batch, const TrainConfig& config,
                          std::uint64_t step, const StepOptions& options) {
  const LossWeights weights = config.loss_weights();
  weights.validate();
  StepLosses out;

  const Encoding enc = encode(model, batch.lr_b);
  Tensor f = enc.f;
  if (weights.kl_substitute) {
    if (!enc.logvar) throw ConfigError("kl_substitute needs an encoder with a log-variance head");
    // Reparameterised sample f = mu + exp(logvar / 2) * eps.
    Rng rng = make_rng(config.target_seed, {step, 0xe75});
    const Tensor eps = sample_targets(TargetKind::kGaussian, model.arch.repr_dim, f.dim(0), rng);
    f = ops::add(enc.f, ops::mul(ops::exp(ops::scale(*enc.logvar, 0.5)), eps));
    out.components.kl = loss_kl(enc.f, *enc.logvar);
  }

  std::optional<Tensor> lr_pred;
  if (weights.use_rd) {
    lr_pred = degrade_net(model, batch.hr_a, f);
    out.components.rd = loss_rd(batch.lr_a, *lr_pred);
  }
  if (weights.use_ed) {
    Rng rng = make_rng(config.target_seed, {step});
    const Tensor targets =
        sample_targets(config.ed_target, model.arch.repr_dim, config.target_samples, rng);
    out.components.ed = loss_ed(enc.f, targets);
  }

  const Tensor sr = generate(model, batch.lr_b, f);
  std::vector<double> w(sr.dim(0), 1.0);
  if (weights.modulated_sr) {
    if (options.force_rmse) {
      for (auto& v : w) v = modulation_coefficient(*options.force_rmse);
    } else {
      const auto cw = modulation_weight(batch.lr_a, lr_pred->detach());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = cw[i].w;
    }
  }
  out.components.sr = loss_sr(sr, batch.hr_b, w);
  double sw = 0.0;
  for (double v : w) sw += v;
  out.mean_w = sw / static_cast<double>(w.size());
  out.total = total_loss(out.components, weights);
  return out;
}

ParamMap trainable_params(const Model& model, const TrainConfig& config) {
  ParamMap out = model.subset("gen.");
  for (auto& [name, t] : model.subset("enc.")) {
    if (name.rfind("enc.logvar", 0) == 0 && !config.kl_substitute) continue;
    out.emplace(name, t);
  }
  if (config.loss_rd) out.merge(model.subset("deg."));
  return out;
}

std::string format_record(const TrainRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f",
                static_cast<unsigned long long>(r.step), r.loss_rd, r.loss_ed, r.loss_sr,
                r.loss_total, r.mean_w, r.lr, r.ms);
  return buf;
}

double learning_rate_at(const TrainConfig& config, std::uint64_t step) {
  const std::uint64_t epoch = step / config.iterations_per_epoch;
  const auto halvings = static_cast<int>(epoch / config.schedule_period);
  return std::ldexp(config.initial_lr, -halvings);
}

TrainRecord train_step(Model& model, Adam& adam, const Batch& batch, const TrainConfig& config,
                       std::uint64_t step) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainRecord rec;
  rec.step = step;
  rec.lr = learning_rate_at(config, step);
  adam.set_learning_rate(rec.lr);
  auto value = [](const std::optional<Tensor>& t) { return t ? t->item() : 0.0; };
  try {
    const StepLosses losses = forward_losses(model, batch, config, step);
    rec.loss_rd = value(losses.components.rd);
    rec.loss_ed = config.kl_substitute ? value(losses.components.kl) : value(losses.components.ed);
    rec.loss_sr = value(losses.components.sr);
    rec.loss_total = losses.total.item();
    rec.mean_w = losses.mean_w;
    ParamMap params = trainable_params(model, config);
    losses.total.backward();
    adam.step(params);
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "step " << step << ": " << e.what() << " (L_RD=" << rec.loss_rd
       << ", L_ED=" << rec.loss_ed << ", L_SR=" << rec.loss_sr << ", total=" << rec.loss_total
       << ")";
    throw NumericError(os.str());
  }
  const auto t1 = std::chrono::steady_clock::now();
  if (config.log_wall_time) rec.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return rec;
}

std::vector<Image> load_training_images(const TrainConfig& config) {
  if (config.hr_dir.empty()) {
    return synthetic_dataset(config.synthetic_count, config.synthetic_size, config.synthetic_seed);
  }
  std::vector<Image> out;
  for (const auto& p : list_images(config.hr_dir)) out.push_back(read_pnm(p));
  if (out.empty()) throw IoError("no PPM/PGM images in " + config.hr_dir);
  return out;
}

namespace {

// Every step allocates and frees the same activation buffers. Keeping them in
// the heap instead of returning them to the OS avoids refaulting the pages.
void retain_freed_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

std::vector<std::string> previous_rows(const std::filesystem::path& log, std::uint64_t before) {
  std::vector<std::string> rows;
  std::ifstream is(log);
  if (!is) return rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) < before) rows.push_back(line);
  }
  return rows;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<Image>& images,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume) {
  config.validate();
  retain_freed_memory();
  std::filesystem::create_directories(out_dir);
  const std::vector<Image> pool = usable_images(images, config);

  Model model;
  Adam adam(AdamConfig{config.initial_lr});
  std::uint64_t start = 0;
  if (resume) {
    Checkpoint ck = load_checkpoint(*resume, config.architecture());
    model = std::move(ck.model);
    if (ck.optimizer) adam = *ck.optimizer;
    start = ck.step;
  } else {
    model = Model::init(config.architecture(), config.init_seed);
  }

  const auto log_path = out_dir / "log.csv";
  const auto kept = resume ? previous_rows(log_path, start) : std::vector<std::string>{};
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  log << kLogHeader << '\n';
  for (const auto& row : kept) log << row << '\n';
  log.flush();

  TrainResult result;
  const std::uint64_t total = config.total_steps();
  for (std::uint64_t step = start; step < total; ++step) {
    const Batch batch = build_batch(pool, config, step);
    TrainRecord rec = train_step(model, adam, batch, config, step);
    log << format_record(rec) << '\n';
    log.flush();
    result.log.push_back(rec);
    if ((step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(out_dir / ("ckpt_" + std::to_string(step + 1) + ".rdck"), model, &adam,
                      step + 1);
    }
  }
  result.final_checkpoint = out_dir / "final.rdck";
  save_checkpoint(result.final_checkpoint, model, &adam, std::max(start, total));
  result.model = std::move(model);
  return result;
}

}  // namespace redsr
