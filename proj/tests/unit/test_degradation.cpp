#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "redsr/degradation.hpp"
#include "redsr/errors.hpp"
#include "redsr/image.hpp"
#include "redsr/rdt.hpp"
#include "redsr/synthetic.hpp"

using namespace redsr;
namespace fs = std::filesystem;

namespace {

double kernel_sum(const BlurKernel& k) {
  double s = 0.0;
  for (double v : k.weights) s += v;
  return s;
}

double max_diff(const BlurKernel& a, const BlurKernel& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) m = std::max(m, std::abs(a.weights[i] - b.weights[i]));
  return m;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("redsr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Writes a few 8-bit PPMs of synthetic content; returns the directory.
fs::path image_dir(const std::string& name) {
  const fs::path dir = fresh_dir(name);
  for (std::size_t i = 0; i < 3; ++i) {
    write_pnm(dir / ("img" + std::to_string(i) + ".ppm"), synthetic_texture(96, 40 + i));
  }
  return dir;
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("normalized for random specs") {
    Rng rng = make_rng(1);
    for (int i = 0; i < 200; ++i) {
      const auto spec = sample_spec(rng, DegradationMode::kAnisotropic);
      CHECK(std::abs(kernel_sum(make_kernel(spec)) - 1.0) < 1e-9);
    }
  }

  TEST_CASE("isotropic kernels ignore theta") {
    for (double sigma : {0.2, 1.0, 2.7, 4.0}) {
      const BlurKernel base = make_kernel({sigma, sigma, 0.0, 0.0, 2});
      for (double theta : {0.3, 1.1, 2.9}) {
        CHECK(max_diff(base, make_kernel({sigma, sigma, theta, 0.0, 2})) < 1e-12);
      }
    }
  }

  TEST_CASE("narrow kernel is almost a delta") {
    const BlurKernel k = make_kernel({0.2, 0.2, 0.0, 0.0, 1});
    CHECK(k.at(kKernelCenter, kKernelCenter) > 0.9999);
  }

  TEST_CASE("180 degree symmetry") {
    const BlurKernel k = make_kernel({3.1, 0.7, 0.4, 0.0, 2});
    for (std::size_t r = 0; r < kKernelSize; ++r)
      for (std::size_t c = 0; c < kKernelSize; ++c)
        CHECK(std::abs(k.at(r, c) - k.at(kKernelSize - 1 - r, kKernelSize - 1 - c)) < 1e-12);
  }

  TEST_CASE("swapping the axes and rotating by a quarter turn gives the same kernel") {
    Rng rng = make_rng(2);
    for (int i = 0; i < 50; ++i) {
      const auto s = sample_spec(rng, DegradationMode::kAnisotropic);
      const double rotated = std::fmod(s.theta + std::numbers::pi / 2, std::numbers::pi);
      CHECK(max_diff(make_kernel(s), make_kernel({s.sigma2, s.sigma1, rotated, 0.0, 2})) < 1e-12);
    }
  }

  TEST_CASE("wider first axis along x when theta is zero") {
    const BlurKernel k = make_kernel({3.0, 0.5, 0.0, 0.0, 2});
    CHECK(k.at(kKernelCenter, kKernelCenter + 3) > k.at(kKernelCenter + 3, kKernelCenter));
  }

  TEST_CASE("non-positive width") {
    CHECK_THROWS_AS(make_kernel({0.0, 1.0, 0.0, 0.0, 2}), ParameterError);
    CHECK_THROWS_AS(make_kernel({1.0, -1.0, 0.0, 0.0, 2}), ParameterError);
  }
}

TEST_SUITE("degrade") {
  TEST_CASE("near-delta kernel without decimation is the identity") {
    const Image hr = synthetic_texture(48, 3);
    const Image lr = degrade(hr, {0.2, 0.2, 0.0, 0.0, 1}, 0);
    double m = 0.0;
    for (std::size_t i = 0; i < hr.values.size(); ++i) m = std::max(m, std::abs(hr.values[i] - lr.values[i]));
    CHECK(m < 1e-4);
  }

  TEST_CASE("constant images are fixed points") {
    const Image hr(32, 32, 3, 0.37);
    Rng rng = make_rng(4);
    for (int i = 0; i < 5; ++i) {
      const Image lr = degrade(hr, sample_spec(rng, DegradationMode::kAnisotropic), 0);
      CHECK(lr.height == 16);
      for (double v : lr.values) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
  }

  TEST_CASE("decimation keeps the blurred pixels at multiples of s") {
    // A single bright pixel at (8, 8) with s=2 lands at LR (4, 4); the
    // neighbouring LR pixel sees the kernel two taps away.
    Image hr(16, 16, 1, 0.0);
    hr.at(0, 8, 8) = 1.0;
    const DegradationSpec spec{1.5, 1.5, 0.0, 0.0, 2};
    const BlurKernel k = make_kernel(spec);
    const Image lr = degrade(hr, spec, 0);
    CHECK(lr.at(0, 4, 4) == doctest::Approx(k.at(10, 10)).epsilon(1e-12));
    CHECK(lr.at(0, 4, 5) == doctest::Approx(k.at(10, 8)).epsilon(1e-12));
  }

  TEST_CASE("reflective borders mirror without repeating the edge") {
    // Horizontal ramp; the expected value applies dcb|abcd|cba by hand.
    Image hr(8, 8, 1, 0.0);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) hr.at(0, y, x) = static_cast<double>(x);
    const DegradationSpec spec{0.8, 0.8, 0.0, 0.0, 1};
    const BlurKernel k = make_kernel(spec);
    const Image lr = degrade(hr, spec, 0);
    double expected = 0.0;
    for (std::size_t r = 0; r < kKernelSize; ++r)
      for (std::size_t q = 0; q < kKernelSize; ++q) {
        const long off = static_cast<long>(q) - 10;
        long x = off;
        while (x < 0 || x > 7) x = x < 0 ? -x : 14 - x;
        expected += k.at(r, q) * static_cast<double>(x);
      }
    CHECK(lr.at(0, 3, 0) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("noise level 25 has the expected spread") {
    const Image hr(128, 128, 1, 0.5);
    const Image lr = degrade(hr, {1.0, 1.0, 0.0, 25.0, 2}, 77);
    double mean = 0.0, var = 0.0;
    for (double v : lr.values) mean += v;
    mean /= static_cast<double>(lr.values.size());
    for (double v : lr.values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(lr.values.size()));
    CHECK(std::abs(sd - 25.0 / 255.0) < 0.2 * 25.0 / 255.0);
  }

  TEST_CASE("deterministic given the noise seed") {
    const Image hr = synthetic_texture(32, 5);
    const DegradationSpec spec{2.0, 1.0, 0.5, 10.0, 2};
    CHECK(degrade(hr, spec, 9).values == degrade(hr, spec, 9).values);
    CHECK(degrade(hr, spec, 9).values != degrade(hr, spec, 10).values);
  }

  TEST_CASE("dimensions not divisible by the scale") {
    CHECK_THROWS_AS(degrade(Image(15, 16, 3), {1, 1, 0, 0, 2}, 0), DimensionError);
  }
}

TEST_SUITE("sample_spec") {
  TEST_CASE("isotropic draws") {
    Rng rng = make_rng(6);
    for (int i = 0; i < 100; ++i) {
      const auto s = sample_spec(rng, DegradationMode::kIsotropic);
      CHECK(s.sigma1 == s.sigma2);
      CHECK(s.theta == 0.0);
      CHECK(s.noise_level == 0.0);
    }
  }

  TEST_CASE("anisotropic width mean and ranges") {
    Rng rng = make_rng(7);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto s = sample_spec(rng, DegradationMode::kAnisotropicNoise);
      sum += s.sigma1;
      CHECK(s.sigma1 >= kSigmaMin);
      CHECK(s.sigma2 <= kSigmaMax);
      CHECK(s.theta >= 0.0);
      CHECK(s.theta < std::numbers::pi);
      CHECK(s.noise_level <= kNoiseMax);
    }
    CHECK(std::abs(sum / 10000.0 - 2.1) < 0.1);
  }

  TEST_CASE("same seed, same spec") {
    Rng a = make_rng(8), b = make_rng(8);
    CHECK(sample_spec(a, DegradationMode::kAnisotropicNoise) ==
          sample_spec(b, DegradationMode::kAnisotropicNoise));
  }

  TEST_CASE("mode names") {
    CHECK(parse_mode("anisotropic+noise") == DegradationMode::kAnisotropicNoise);
    CHECK(mode_name(DegradationMode::kIsotropic) == "isotropic");
    CHECK_THROWS_AS(parse_mode("bicubic"), ConfigError);
  }
}

TEST_SUITE("gen_dataset") {
  TEST_CASE("count zero writes an empty manifest and no patches") {
    const fs::path images = image_dir("gd_empty_in");
    const fs::path out = fresh_dir("gd_empty_out");
    const auto entries = gen_dataset(images, {0, DegradationMode::kAnisotropicNoise, 1}, out);
    CHECK(entries.empty());
    CHECK(read_manifest(out / "manifest.json").empty());
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(out)) ++files;
    CHECK(files == 1);
  }

  TEST_CASE("same seed gives byte-identical output and replay is bit exact") {
    const fs::path images = image_dir("gd_in");
    const fs::path a = fresh_dir("gd_a"), b = fresh_dir("gd_b");
    const DatasetOptions opts{6, DegradationMode::kAnisotropicNoise, 21, 16, 2};
    gen_dataset(images, opts, a);
    gen_dataset(images, opts, b);
    for (const auto& e : fs::directory_iterator(a)) {
      CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }

    for (const auto& e : read_manifest(a / "manifest.json")) {
      const Image hr = from_batch(rdt::load(a / e.hr_file)).front();
      const Tensor lr = rdt::load(a / e.lr_file);
      const Image replay = degrade(hr, e.spec, e.noise_seed);
      CHECK(replay.values == std::vector<double>(lr.data().begin(), lr.data().end()));
      CHECK(hr.height == 32);
      CHECK(lr.dim(2) == 16);
    }
  }

  TEST_CASE("missing image directory is an I/O error naming the path") {
    const fs::path out = fresh_dir("gd_missing_out");
    try {
      gen_dataset("/nonexistent/redsr_images", {1, DegradationMode::kIsotropic, 1}, out);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/redsr_images") != std::string::npos);
    }
  }

  TEST_CASE("unreadable image is an I/O error naming the file") {
    const fs::path dir = fresh_dir("gd_bad_in");
    std::ofstream(dir / "broken.ppm") << "P6\n4 4\n255\n";  // truncated payload
    try {
      gen_dataset(dir, {1, DegradationMode::kIsotropic, 1}, fresh_dir("gd_bad_out"));
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("broken.ppm") != std::string::npos);
    }
  }
}

TEST_SUITE("image io") {
  TEST_CASE("ppm round trip quantizes to 8 bits") {
    const fs::path dir = fresh_dir("pnm");
    Image img(3, 2, 3, 0.0);
    img.at(0, 0, 0) = 1.0;
    img.at(1, 2, 1) = 0.5;
    img.at(2, 1, 0) = 1.7;  // clamped
    write_pnm(dir / "x.ppm", img);
    const Image back = read_pnm(dir / "x.ppm");
    CHECK(back.channels == 3);
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(back.at(1, 2, 1) == doctest::Approx(128.0 / 255.0));
    CHECK(back.at(2, 1, 0) == 1.0);
  }

  TEST_CASE("batch conversion round trip") {
    const Image a = synthetic_texture(16, 1), b = synthetic_texture(16, 2);
    const auto back = from_batch(to_batch({a, b}));
    CHECK(back[1].values == b.values);
    CHECK_THROWS_AS(to_batch({a, synthetic_texture(8, 1)}), DimensionError);
  }
}
