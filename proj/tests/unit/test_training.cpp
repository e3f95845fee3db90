#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "doctest.h"
#include "redsr/errors.hpp"
#include "redsr/synthetic.hpp"
#include "redsr/training.hpp"

using namespace redsr;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_slots = 2;
  c.lr_patch = 16;
  c.target_samples = 8;
  c.repr_dim = 4;
  c.degrader_width = 4;
  c.degrader_blocks = 1;
  c.generator_width = 4;
  c.generator_blocks = 1;
  c.synthetic_count = 3;
  c.synthetic_size = 64;
  c.epochs = 1;
  c.iterations_per_epoch = 4;
  c.checkpoint_every = 2;
  return c;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("redsr_test_training_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool any_nonzero_grad(const ParamMap& params) {
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) {
      if (g != 0.0) return true;
    }
  }
  return false;
}

void zero_all(Model& m) {
  for (auto& [name, t] : m.params) t.zero_grad();
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("json round trip") {
    TrainConfig c = tiny_config();
    c.degradation_mode = DegradationMode::kAnisotropicNoise;
    c.iso_widths = {0.5, 1.5};
    c.ed_target = TargetKind::kUniform;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
  }

  TEST_CASE("rejections") {
    CHECK_THROWS_AS(TrainConfig::from_json({{"bogus_key", 1}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", "many"}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json::array()), ConfigError);
    TrainConfig c = tiny_config();
    c.kl_substitute = true;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.lr_patch = 8;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.initial_lr = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.loss_rd = false;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.modulated_sr = false;
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("learning-rate schedule halves every period") {
    TrainConfig c;
    c.initial_lr = 1e-4;
    c.iterations_per_epoch = 100;
    c.schedule_period = 7;
    CHECK(learning_rate_at(c, 0) == 1e-4);
    CHECK(learning_rate_at(c, 699) == 1e-4);
    CHECK(learning_rate_at(c, 700) == 5e-5);
    CHECK(learning_rate_at(c, 1399) == 5e-5);
    CHECK(learning_rate_at(c, 1400) == 2.5e-5);
    CHECK(learning_rate_at(c, 1999) == 2.5e-5);
  }
}

TEST_SUITE("batches") {
  TEST_CASE("slot invariants") {
    TrainConfig c = tiny_config();
    c.batch_slots = 6;
    c.degradation_mode = DegradationMode::kAnisotropicNoise;
    const auto images = load_training_images(c);
    for (std::uint64_t step = 0; step < 5; ++step) {
      const Batch b = build_batch(images, c, step);
      CHECK(b.hr_a.shape() == Shape{6, 3, 32, 32});
      CHECK(b.hr_b.shape() == Shape{6, 3, 32, 32});
      CHECK(b.lr_a.shape() == Shape{6, 3, 16, 16});
      CHECK(b.lr_b.shape() == Shape{6, 3, 16, 16});
      REQUIRE(b.specs.size() == 6);
      for (std::size_t i = 0; i < 6; ++i) {
        CHECK_FALSE(b.crops_a[i].overlaps(b.crops_b[i]));
        CHECK(b.crops_a[i].y + 32 <= 64);
        CHECK(b.crops_a[i].x + 32 <= 64);
        CHECK(b.crops_b[i].y + 32 <= 64);
        CHECK(b.crops_b[i].x + 32 <= 64);
        // HR crops are exactly the image regions.
        const Image& img = images[b.image_index[i]];
        const Image expect = img.crop(b.crops_a[i].y, b.crops_a[i].x, 32, 32);
        for (std::size_t k = 0; k < expect.values.size(); ++k) {
          REQUIRE(b.hr_a[i * 3 * 32 * 32 + k] == expect.values[k]);
        }
      }
    }
  }

  TEST_CASE("fixed width set") {
    TrainConfig c = tiny_config();
    c.batch_slots = 16;
    c.iso_widths = {0.2, 2.0, 4.0};
    const auto images = load_training_images(c);
    std::set<double> seen;
    for (const auto& s : build_batch(images, c, 0).specs) {
      CHECK(s.sigma1 == s.sigma2);
      seen.insert(s.sigma1);
    }
    for (double w : seen) CHECK((w == 0.2 || w == 2.0 || w == 4.0));
    CHECK(seen.size() > 1);
  }

  TEST_CASE("deterministic per step") {
    const TrainConfig c = tiny_config();
    const auto images = load_training_images(c);
    const Batch a = build_batch(images, c, 3), b = build_batch(images, c, 3), d = build_batch(images, c, 4);
    CHECK(values(a.lr_a) == values(b.lr_a));
    CHECK(values(a.lr_b) == values(b.lr_b));
    CHECK(values(a.hr_b) == values(b.hr_b));
    CHECK(values(a.lr_b) != values(d.lr_b));
  }

  TEST_CASE("undersized images") {
    TrainConfig c = tiny_config();
    std::vector<Image> imgs{Image(40, 40, 3), Image(64, 32, 3)};
    const auto usable = usable_images(imgs, c);
    CHECK(usable.size() == 1);
    CHECK_THROWS_AS(usable_images({Image(40, 40, 3)}, c), ParameterError);
    CHECK_THROWS_AS(build_batch({Image(40, 40, 3)}, c, 0), ParameterError);
  }
}

TEST_SUITE("steps") {
  TEST_CASE("loss components route gradients to their own networks") {
    const TrainConfig c = tiny_config();
    const auto images = load_training_images(c);
    Model m = Model::init(c.architecture(), c.init_seed);
    const Batch b = build_batch(images, c, 0);

    StepLosses l = forward_losses(m, b, c, 0);
    REQUIRE(l.components.rd);
    l.components.rd->backward();
    CHECK_FALSE(any_nonzero_grad(m.subset("gen.")));
    CHECK(any_nonzero_grad(m.subset("deg.")));
    zero_all(m);

    l = forward_losses(m, b, c, 0);
    l.components.sr->backward();
    CHECK_FALSE(any_nonzero_grad(m.subset("deg.")));
    CHECK(any_nonzero_grad(m.subset("gen.")));
    zero_all(m);

    l = forward_losses(m, b, c, 0);
    l.components.ed->backward();
    CHECK_FALSE(any_nonzero_grad(m.subset("deg.")));
    CHECK_FALSE(any_nonzero_grad(m.subset("gen.")));
    CHECK(any_nonzero_grad(m.subset("enc.")));
  }

  TEST_CASE("SR loss reaches the encoder once modulation heads move") {
    const TrainConfig c = tiny_config();
    const auto images = load_training_images(c);
    Model m = Model::init(c.architecture(), c.init_seed);
    const Batch b = build_batch(images, c, 0);

    forward_losses(m, b, c, 0).components.sr->backward();
    CHECK_FALSE(any_nonzero_grad(m.subset("enc.")));
    zero_all(m);

    Adam adam(AdamConfig{c.initial_lr});
    train_step(m, adam, b, c, 0);
    forward_losses(m, b, c, 1).components.sr->backward();
    CHECK(any_nonzero_grad(m.subset("enc.")));
  }

  TEST_CASE("modulation weight follows forced RMSE") {
    const TrainConfig c = tiny_config();
    const auto images = load_training_images(c);
    const Model m = Model::init(c.architecture(), c.init_seed);
    const Batch b = build_batch(images, c, 0);
    StepOptions opt;
    opt.force_rmse = 1.0;
    CHECK(forward_losses(m, b, c, 0, opt).mean_w == 1.0);
    opt.force_rmse = 0.0;
    const StepLosses l = forward_losses(m, b, c, 0, opt);
    CHECK(l.mean_w == 2.0);
    CHECK(l.total.item() == doctest::Approx(c.lambda1 * l.components.ed->item() + l.components.rd->item() +
                                            l.components.sr->item()));
  }

  TEST_CASE("model-1 configuration trains without the degrader") {
    TrainConfig c = tiny_config();
    c.loss_rd = c.loss_ed = c.modulated_sr = false;
    const auto images = load_training_images(c);
    Model m = Model::init(c.architecture(), c.init_seed);
    const auto before = values(m.param(m.subset("deg.").begin()->first));
    Adam adam(AdamConfig{c.initial_lr});
    const TrainRecord r = train_step(m, adam, build_batch(images, c, 0), c, 0);
    CHECK(r.loss_rd == 0.0);
    CHECK(r.loss_ed == 0.0);
    CHECK(r.loss_sr > 0.0);
    CHECK(r.mean_w == 1.0);
    CHECK(r.loss_total == r.loss_sr);
    CHECK(values(m.param(m.subset("deg.").begin()->first)) == before);
    for (const auto& [name, t] : trainable_params(m, c)) CHECK(name.rfind("deg.", 0) != 0);
  }

  TEST_CASE("replaying a step reproduces the record bit for bit") {
    TrainConfig c = tiny_config();
    c.degradation_mode = DegradationMode::kAnisotropicNoise;
    const auto images = load_training_images(c);
    const Batch b = build_batch(images, c, 0);
    std::string rows[2];
    std::vector<double> params[2];
    for (int run = 0; run < 2; ++run) {
      Model m = Model::init(c.architecture(), c.init_seed);
      Adam adam(AdamConfig{c.initial_lr});
      rows[run] = format_record(train_step(m, adam, b, c, 0));
      for (const auto& [name, t] : m.params) params[run].insert(params[run].end(), t.data().begin(), t.data().end());
    }
    CHECK(rows[0] == rows[1]);
    CHECK(params[0] == params[1]);
  }
}

TEST_SUITE("train") {
  TEST_CASE("log and checkpoints") {
    const TrainConfig c = tiny_config();
    const auto dir = fresh_dir("log");
    const TrainResult r = train(c, load_training_images(c), dir);
    CHECK(r.log.size() == 4);
    CHECK(fs::exists(dir / "ckpt_2.rdck"));
    CHECK(fs::exists(dir / "ckpt_4.rdck"));
    CHECK(load_checkpoint(dir / "final.rdck").step == 4);
    std::istringstream log(slurp(dir / "log.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == kLogHeader);
    int rows = 0;
    while (std::getline(log, line)) {
      CHECK(line == format_record(r.log[rows]));
      CHECK(line.substr(line.rfind(',') + 1) == "0.000");
      ++rows;
    }
    CHECK(rows == 4);
  }

  TEST_CASE("zero epochs writes the initial model and an empty log") {
    TrainConfig c = tiny_config();
    c.epochs = 0;
    const auto dir = fresh_dir("empty");
    const TrainResult r = train(c, load_training_images(c), dir);
    CHECK(r.log.empty());
    CHECK(slurp(dir / "log.csv") == std::string(kLogHeader) + "\n");
    const Checkpoint ck = load_checkpoint(dir / "final.rdck", c.architecture());
    CHECK(ck.step == 0);
    const Model init = Model::init(c.architecture(), c.init_seed);
    for (const auto& [name, t] : init.params) CHECK(values(ck.model.param(name)) == values(t));
  }

  TEST_CASE("resuming matches an uninterrupted run") {
    TrainConfig c = tiny_config();
    c.degradation_mode = DegradationMode::kAnisotropicNoise;
    const auto images = load_training_images(c);
    const auto full = fresh_dir("full"), part = fresh_dir("part");
    train(c, images, full);

    TrainConfig shorter = c;
    shorter.iterations_per_epoch = 2;
    train(shorter, images, part);
    // Keep the earlier rows; the checkpoint is all the resume needs.
    train(c, images, part, part / "final.rdck");

    CHECK(slurp(full / "log.csv") == slurp(part / "log.csv"));
    CHECK(slurp(full / "final.rdck") == slurp(part / "final.rdck"));
    CHECK(slurp(full / "ckpt_4.rdck") == slurp(part / "ckpt_4.rdck"));
  }

  TEST_CASE("identical runs write identical bytes") {
    const TrainConfig c = tiny_config();
    const auto images = load_training_images(c);
    const auto a = fresh_dir("same_a"), b = fresh_dir("same_b");
    train(c, images, a);
    train(c, images, b);
    CHECK(slurp(a / "log.csv") == slurp(b / "log.csv"));
    CHECK(slurp(a / "final.rdck") == slurp(b / "final.rdck"));
  }

  TEST_CASE("resume rejects a checkpoint for another architecture") {
    TrainConfig c = tiny_config();
    c.epochs = 0;
    const auto dir = fresh_dir("arch");
    train(c, load_training_images(c), dir);
    TrainConfig other = tiny_config();
    other.repr_dim = 6;
    CHECK_THROWS_AS(train(other, load_training_images(other), fresh_dir("arch2"), dir / "final.rdck"),
                    FormatError);
  }
}
