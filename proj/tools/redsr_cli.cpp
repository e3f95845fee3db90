#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "redsr/errors.hpp"
#include "redsr/metrics.hpp"
#include "redsr/rdt.hpp"
#include "redsr/selftest.hpp"
#include "redsr/training.hpp"

using namespace redsr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;
constexpr int kExitFormat = 4;

void print_effective(const std::string& command, const json& config) {
  std::cout << "effective config (" << command << "):\n" << config.dump(2) << "\n" << std::flush;
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

// `key=value`; the value is parsed as JSON and falls back to a plain string.
json parse_overrides(const std::vector<std::string>& sets) {
  json out = json::object();
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    const json parsed = json::parse(value, nullptr, false);
    out[key] = parsed.is_discarded() ? json(value) : parsed;
  }
  return out;
}

Image load_image(const fs::path& path) {
  if (path.extension() == ".rdt") return from_batch(rdt::load(path)).front();
  return read_pnm(path);
}

void save_image(const fs::path& path, const Image& img) {
  if (path.extension() == ".rdt") {
    rdt::save(path, to_batch({img}));
  } else {
    write_pnm(path, img);
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string hr_dir, out, mode = "anisotropic+noise";
  std::size_t count = 0, lr_patch = 32, scale = 2;
  std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  DatasetOptions opt{a.count, parse_mode(a.mode), a.seed, a.lr_patch, a.scale};
  print_effective("gen-data", {{"hr_dir", a.hr_dir}, {"count", a.count}, {"mode", mode_name(opt.mode)},
                               {"seed", a.seed}, {"lr_patch", a.lr_patch}, {"scale", a.scale}, {"out", a.out}});
  const auto entries = gen_dataset(a.hr_dir, opt, a.out);
  std::cout << "wrote " << entries.size() << " pairs to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, out, resume;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> init_seed, data_seed, noise_seed, target_seed;
  std::optional<std::size_t> epochs, iterations;
  std::string hr_dir;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig config;
  if (!a.config.empty()) config.merge_json(read_json_file(a.config));
  config.merge_json(parse_overrides(a.sets));
  if (a.init_seed) config.init_seed = *a.init_seed;
  if (a.data_seed) config.data_seed = *a.data_seed;
  if (a.noise_seed) config.noise_seed = *a.noise_seed;
  if (a.target_seed) config.target_seed = *a.target_seed;
  if (a.epochs) config.epochs = *a.epochs;
  if (a.iterations) config.iterations_per_epoch = *a.iterations;
  if (!a.hr_dir.empty()) config.hr_dir = a.hr_dir;
  json shown = config.to_json();
  shown["out"] = a.out;
  if (!a.resume.empty()) shown["resume"] = a.resume;
  print_effective("train", shown);
  config.validate();

  const auto images = load_training_images(config);
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  const TrainResult r = train(config, images, a.out, resume);
  if (a.verbose) {
    std::cout << kLogHeader << "\n";
    for (const auto& rec : r.log) std::cout << format_record(rec) << "\n";
  }
  if (!r.log.empty()) {
    const auto& last = r.log.back();
    std::cout << "step " << last.step + 1 << ": L_RD " << fmt(last.loss_rd) << ", L_ED " << fmt(last.loss_ed)
              << ", L_SR " << fmt(last.loss_sr) << "\n";
  }
  std::cout << "final checkpoint " << r.final_checkpoint.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, report;
  bool identity_sr = false;
};

int cmd_eval(const EvalArgs& a) {
  print_effective("eval", {{"checkpoint", a.checkpoint}, {"dataset", a.dataset}, {"report", a.report},
                           {"identity_sr", a.identity_sr}});
  const Model model = load_checkpoint(a.checkpoint).model;
  const auto entries = read_manifest(fs::path(a.dataset) / "manifest.json");

  using Key = std::tuple<double, double, double, double>;
  struct Acc {
    std::size_t count = 0;
    double psnr = 0.0, ssim = 0.0;
  };
  std::map<Key, Acc> groups;
  for (const auto& e : entries) {
    const Image hr = load_image(fs::path(a.dataset) / e.hr_file);
    const Image lr = load_image(fs::path(a.dataset) / e.lr_file);
    if (lr.height * model.arch.scale != hr.height || lr.width * model.arch.scale != hr.width) {
      throw ConfigError("eval: dataset scale does not match checkpoint scale " + std::to_string(model.arch.scale));
    }
    const Image sr = a.identity_sr ? hr : super_resolve(model, lr);
    Acc& g = groups[{e.spec.sigma1, e.spec.sigma2, e.spec.theta, e.spec.noise_level}];
    ++g.count;
    g.psnr += psnr(sr, hr);
    g.ssim += ssim(sr, hr);
  }

  std::ostringstream csv;
  csv << "sigma1,sigma2,theta,noise,count,psnr,ssim\n";
  for (const auto& [key, g] : groups) {
    const auto& [s1, s2, th, nz] = key;
    csv << fmt(s1) << ',' << fmt(s2) << ',' << fmt(th) << ',' << fmt(nz) << ',' << g.count << ','
        << fmt(g.psnr / static_cast<double>(g.count)) << ',' << fmt(g.ssim / static_cast<double>(g.count)) << '\n';
  }
  if (!a.report.empty()) {
    std::ofstream os(a.report, std::ios::trunc);
    if (!os) throw IoError("cannot write report " + a.report);
    os << csv.str();
  }
  std::cout << csv.str();
  return 0;
}

struct DegradeArgs {
  std::string input, output;
  double sigma1 = 1.0, theta = 0.0, noise = 0.0;
  std::optional<double> sigma2;
  std::size_t scale = 2;
  std::uint64_t seed = 0;
};

int cmd_degrade(const DegradeArgs& a) {
  const DegradationSpec spec{a.sigma1, a.sigma2.value_or(a.sigma1), a.theta, a.noise, a.scale};
  print_effective("degrade", {{"input", a.input}, {"output", a.output}, {"sigma1", spec.sigma1},
                              {"sigma2", spec.sigma2}, {"theta", spec.theta}, {"noise", spec.noise_level},
                              {"scale", spec.scale}, {"seed", a.seed}});
  save_image(a.output, degrade(load_image(a.input), spec, a.seed));
  return 0;
}

struct SrArgs {
  std::string checkpoint, input, output;
};

int cmd_sr(const SrArgs& a) {
  print_effective("sr", {{"checkpoint", a.checkpoint}, {"input", a.input}, {"output", a.output}});
  const Model model = load_checkpoint(a.checkpoint).model;
  save_image(a.output, super_resolve(model, load_image(a.input)));
  return 0;
}

struct ReprArgs {
  std::string checkpoint, dataset, out;
};

int cmd_repr(const ReprArgs& a) {
  print_effective("repr", {{"checkpoint", a.checkpoint}, {"dataset", a.dataset}, {"out", a.out}});
  const Model model = load_checkpoint(a.checkpoint).model;
  const auto entries = read_manifest(fs::path(a.dataset) / "manifest.json");
  if (entries.empty()) throw ParameterError("repr: dataset is empty");

  // One label per distinct degradation spec, in order of first appearance.
  std::vector<DegradationSpec> seen;
  std::vector<int> labels;
  std::vector<Image> lr;
  for (const auto& e : entries) {
    std::size_t k = 0;
    while (k < seen.size() && !(seen[k] == e.spec)) ++k;
    if (k == seen.size()) seen.push_back(e.spec);
    labels.push_back(static_cast<int>(k));
    lr.push_back(load_image(fs::path(a.dataset) / e.lr_file));
  }
  const Tensor reps = representations(model, lr);
  export_representations(a.out, reps, labels);
  std::cout << "exported " << reps.dim(0) << " representations to " << a.out << "\n";
  try {
    const ClusterReport r = cluster_report(reps, labels);
    std::cout << "labels " << r.num_labels << ", accuracy " << fmt(r.accuracy) << ", silhouette "
              << fmt(r.silhouette) << "\n";
  } catch (const ParameterError& e) {
    std::cout << "no cluster report: " << e.what() << "\n";
  }
  return 0;
}

int cmd_selftest() {
  print_effective("selftest", json::object());
  const auto checks = run_selftest();
  bool ok = true;
  std::printf("%-26s %12s %10s  %s\n", "check", "value", "limit", "result");
  for (const auto& c : checks) {
    std::printf("%-26s %12.3e %10.1e  %s\n", c.name.c_str(), c.value, c.limit, c.pass ? "PASS" : "FAIL");
    ok = ok && c.pass;
  }
  std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Degradation-aware blind super-resolution toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Degrade random HR crops into an HR/LR dataset");
  gen_cmd->add_option("--hr-dir", gen.hr_dir, "Directory of PPM/PGM images")->required();
  gen_cmd->add_option("--count", gen.count, "Number of pairs")->required();
  gen_cmd->add_option("--mode", gen.mode, "isotropic, anisotropic or anisotropic+noise");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--lr-patch", gen.lr_patch);
  gen_cmd->add_option("--scale", gen.scale);
  gen_cmd->add_option("--out", gen.out)->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train encoder, degrader and generator");
  train_cmd->add_option("--config", tr.config, "JSON file with TrainConfig keys");
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train_cmd->add_option("--set", tr.sets, "Override a config key (key=value)");
  train_cmd->add_option("--init-seed", tr.init_seed);
  train_cmd->add_option("--data-seed", tr.data_seed);
  train_cmd->add_option("--noise-seed", tr.noise_seed);
  train_cmd->add_option("--target-seed", tr.target_seed);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--iterations", tr.iterations, "Iterations per epoch");
  train_cmd->add_option("--hr-dir", tr.hr_dir, "Train on these images instead of the synthetic set");
  train_cmd->add_flag("-v,--verbose", tr.verbose, "Print every log row");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM per degradation over a generated dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--dataset", ev.dataset, "Directory written by gen-data")->required();
  eval_cmd->add_option("--report", ev.report, "CSV output path");
  eval_cmd->add_flag("--identity-sr", ev.identity_sr, "Score HR against itself (pipeline check)");

  DegradeArgs dg;
  auto* degrade_cmd = app.add_subcommand("degrade", "Blur, decimate and add noise to one image");
  degrade_cmd->add_option("--input", dg.input)->required();
  degrade_cmd->add_option("--output", dg.output)->required();
  degrade_cmd->add_option("--sigma1", dg.sigma1);
  degrade_cmd->add_option("--sigma2", dg.sigma2, "Defaults to sigma1");
  degrade_cmd->add_option("--theta", dg.theta, "Radians");
  degrade_cmd->add_option("--noise", dg.noise, "Std on the 0-255 scale");
  degrade_cmd->add_option("--scale", dg.scale);
  degrade_cmd->add_option("--seed", dg.seed, "Noise seed");

  SrArgs sr;
  auto* sr_cmd = app.add_subcommand("sr", "Super-resolve one image");
  sr_cmd->add_option("--checkpoint", sr.checkpoint)->required();
  sr_cmd->add_option("--input", sr.input)->required();
  sr_cmd->add_option("--output", sr.output)->required();

  ReprArgs rp;
  auto* repr_cmd = app.add_subcommand("repr", "Export degradation representations and a cluster report");
  repr_cmd->add_option("--checkpoint", rp.checkpoint)->required();
  repr_cmd->add_option("--dataset", rp.dataset)->required();
  repr_cmd->add_option("--out", rp.out)->required();

  auto* self_cmd = app.add_subcommand("selftest", "Gradient checks and loss identities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*degrade_cmd) return cmd_degrade(dg);
    if (*sr_cmd) return cmd_sr(sr);
    if (*repr_cmd) return cmd_repr(rp);
    if (*self_cmd) return cmd_selftest();
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
