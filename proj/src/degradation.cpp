#include "redsr/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "json.hpp"

#include "redsr/errors.hpp"
#include "redsr/rdt.hpp"

namespace redsr {

DegradationMode parse_mode(const std::string& name) {
  if (name == "isotropic") return DegradationMode::kIsotropic;
  if (name == "anisotropic") return DegradationMode::kAnisotropic;
  if (name == "anisotropic+noise" || name == "anisotropic_noise") {
    return DegradationMode::kAnisotropicNoise;
  }
  throw ConfigError("unknown degradation mode '" + name +
                    "' (expected isotropic, anisotropic, anisotropic+noise)");
}

std::string mode_name(DegradationMode mode) {
  switch (mode) {
    case DegradationMode::kIsotropic: return "isotropic";
    case DegradationMode::kAnisotropic: return "anisotropic";
    case DegradationMode::kAnisotropicNoise: return "anisotropic+noise";
  }
  return "unknown";
}

BlurKernel make_kernel(const DegradationSpec& spec) {
  if (!(spec.sigma1 > 0.0) || !(spec.sigma2 > 0.0)) {
    throw ParameterError("make_kernel: kernel widths must be positive");
  }
  const double c = std::cos(spec.theta), s = std::sin(spec.theta);
  const double l1 = 1.0 / (spec.sigma1 * spec.sigma1);
  const double l2 = 1.0 / (spec.sigma2 * spec.sigma2);
  // Sigma^-1 = R diag(l1, l2) R^T
  const double a = c * c * l1 + s * s * l2;
  const double b = c * s * (l1 - l2);
  const double d = s * s * l1 + c * c * l2;

  BlurKernel k;
  double total = 0.0;
  for (std::size_t row = 0; row < kKernelSize; ++row) {
    const double y = static_cast<double>(row) - static_cast<double>(kKernelCenter);
    for (std::size_t col = 0; col < kKernelSize; ++col) {
      const double x = static_cast<double>(col) - static_cast<double>(kKernelCenter);
      const double v = std::exp(-0.5 * (a * x * x + 2.0 * b * x * y + d * y * y));
      k.weights[row * kKernelSize + col] = v;
      total += v;
    }
  }
  for (auto& v : k.weights) v /= total;
  return k;
}

namespace {

// Mirror about the edge pixels without repeating them (dcb|abcd|cba).
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace

Image degrade(const Image& hr, const DegradationSpec& spec, std::uint64_t noise_seed) {
  if (spec.scale == 0) throw ParameterError("degrade: scale must be positive");
  if (hr.height % spec.scale || hr.width % spec.scale) {
    throw DimensionError("degrade: image " + std::to_string(hr.height) + "x" +
                         std::to_string(hr.width) + " not divisible by scale " +
                         std::to_string(spec.scale));
  }
  if (spec.noise_level < 0.0) throw ParameterError("degrade: negative noise level");
  const BlurKernel k = make_kernel(spec);
  const std::size_t s = spec.scale, h = hr.height / s, w = hr.width / s;
  const long half = static_cast<long>(kKernelCenter);

  // Reflect-pad each channel once and split the padded columns into s phases
  // so the decimated blur reads contiguous runs. Each output pixel still sums
  // its 441 terms in kernel row-major order.
  const std::size_t ph = hr.height + 2 * kKernelCenter, pw = hr.width + 2 * kKernelCenter;
  const std::size_t phase_w = (pw + s - 1) / s;
  std::vector<double> phases(ph * s * phase_w, 0.0);
  std::vector<double> acc(w);
  Image lr(h, w, hr.channels);
  for (std::size_t c = 0; c < hr.channels; ++c) {
    for (std::size_t y = 0; y < ph; ++y) {
      const std::size_t sy = reflect(static_cast<long>(y) - half, hr.height);
      for (std::size_t x = 0; x < pw; ++x) {
        phases[(y * s + x % s) * phase_w + x / s] =
            hr.at(c, sy, reflect(static_cast<long>(x) - half, hr.width));
      }
    }
    for (std::size_t oy = 0; oy < h; ++oy) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t r = 0; r < kKernelSize; ++r) {
        const std::size_t y = oy * s + r;
        for (std::size_t q = 0; q < kKernelSize; ++q) {
          const double kv = k.at(r, q);
          const double* src = phases.data() + (y * s + q % s) * phase_w + q / s;
          for (std::size_t ox = 0; ox < w; ++ox) acc[ox] += kv * src[ox];
        }
      }
      for (std::size_t ox = 0; ox < w; ++ox) lr.at(c, oy, ox) = acc[ox];
    }
  }

  if (spec.noise_level > 0.0) {
    Rng rng = make_rng(noise_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_level / 255.0);
    for (auto& v : lr.values) v += noise(rng);
  }
  return lr;
}

DegradationSpec sample_spec(Rng& rng, DegradationMode mode, std::size_t scale) {
  std::uniform_real_distribution<double> width(kSigmaMin, kSigmaMax);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> noise(0.0, kNoiseMax);
  DegradationSpec spec;
  spec.scale = scale;
  spec.sigma1 = width(rng);
  if (mode == DegradationMode::kIsotropic) {
    spec.sigma2 = spec.sigma1;
    return spec;
  }
  spec.sigma2 = width(rng);
  spec.theta = angle(rng);
  if (spec.theta >= std::numbers::pi) spec.theta = 0.0;
  if (mode == DegradationMode::kAnisotropicNoise) spec.noise_level = noise(rng);
  return spec;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw IoError("image directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {

nlohmann::json to_json(const ManifestEntry& e) {
  return {{"id", e.id},
          {"spec",
           {{"sigma1", e.spec.sigma1},
            {"sigma2", e.spec.sigma2},
            {"theta", e.spec.theta},
            {"noise", e.spec.noise_level},
            {"scale", e.spec.scale}}},
          {"hr_file", e.hr_file},
          {"lr_file", e.lr_file},
          {"noise_seed", e.noise_seed}};
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) j.push_back(to_json(e));
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> out;
  try {
    const auto j = nlohmann::json::parse(is);
    for (const auto& item : j) {
      ManifestEntry e;
      e.id = item.at("id").get<std::size_t>();
      const auto& s = item.at("spec");
      e.spec.sigma1 = s.at("sigma1").get<double>();
      e.spec.sigma2 = s.at("sigma2").get<double>();
      e.spec.theta = s.at("theta").get<double>();
      e.spec.noise_level = s.at("noise").get<double>();
      e.spec.scale = s.at("scale").get<std::size_t>();
      e.hr_file = item.at("hr_file").get<std::string>();
      e.lr_file = item.at("lr_file").get<std::string>();
      e.noise_seed = item.at("noise_seed").get<std::uint64_t>();
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("malformed manifest " + path.string() + ": " + ex.what());
  }
  return out;
}

std::vector<ManifestEntry> gen_dataset(const std::filesystem::path& hr_dir,
                                       const DatasetOptions& options,
                                       const std::filesystem::path& out_dir) {
  const auto files = list_images(hr_dir);
  if (options.count > 0 && files.empty()) {
    throw IoError("no PPM/PGM images in " + hr_dir.string());
  }
  std::filesystem::create_directories(out_dir);
  const std::size_t hr_patch = options.lr_patch * options.scale;

  std::vector<Image> cache(files.size());
  std::vector<bool> loaded(files.size(), false);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < options.count; ++i) {
    Rng rng = make_rng(options.seed, {i});
    const std::size_t which =
        std::uniform_int_distribution<std::size_t>(0, files.size() - 1)(rng);
    if (!loaded[which]) {
      cache[which] = read_pnm(files[which]);
      loaded[which] = true;
    }
    const Image& src = cache[which];
    if (src.height < hr_patch || src.width < hr_patch) {
      throw IoError("image smaller than HR patch " + std::to_string(hr_patch) + ": " +
                    files[which].string());
    }
    ManifestEntry e;
    e.id = i;
    e.spec = sample_spec(rng, options.mode, options.scale);
    const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, src.height - hr_patch)(rng);
    const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, src.width - hr_patch)(rng);
    e.noise_seed = rng();
    const Image hr = src.crop(y0, x0, hr_patch, hr_patch);
    const Image lr = degrade(hr, e.spec, e.noise_seed);
    e.hr_file = "hr_" + std::to_string(i) + ".rdt";
    e.lr_file = "lr_" + std::to_string(i) + ".rdt";
    rdt::save(out_dir / e.hr_file, to_batch({hr}));
    rdt::save(out_dir / e.lr_file, to_batch({lr}));
    entries.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.json", entries);
  return entries;
}

}  // namespace redsr
