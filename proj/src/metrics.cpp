#include "redsr/metrics.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "redsr/errors.hpp"
#include "redsr/random.hpp"
#include "redsr/rdt.hpp"

namespace redsr {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError(std::string(what) + ": images differ in shape");
  }
  if (a.values.empty()) throw DimensionError(std::string(what) + ": empty image");
}

double mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s / static_cast<double>(a.values.size());
}

std::vector<double> luma(const Image& img) {
  const std::size_t n = img.height * img.width;
  std::vector<double> out(n);
  if (img.channels == 1) {
    std::copy(img.values.begin(), img.values.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299 * img.values[i] + 0.587 * img.values[n + i] + 0.114 * img.values[2 * n + i];
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  const double m = mse(a, b);
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double rmse(const Image& a, const Image& b) {
  require_same(a, b, "rmse");
  return std::sqrt(mse(a, b));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  constexpr std::size_t kWin = 11;
  constexpr double kSigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (a.height < kWin || a.width < kWin) {
    throw DimensionError("ssim: image smaller than the 11x11 window");
  }
  std::array<double, kWin> g{};
  double gs = 0.0;
  for (std::size_t i = 0; i < kWin; ++i) {
    const double x = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;

  const auto ya = luma(a), yb = luma(b);
  const std::size_t H = a.height, W = a.width;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + kWin <= H; ++y) {
    for (std::size_t x = 0; x + kWin <= W; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < kWin; ++i) {
        for (std::size_t j = 0; j < kWin; ++j) {
          const double w = g[i] * g[j];
          const double pa = ya[(y + i) * W + x + j], pb = yb[(y + i) * W + x + j];
          ma += w * pa;
          mb += w * pb;
          saa += w * pa * pa;
          sbb += w * pb * pb;
          sab += w * pa * pb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

ClusterReport cluster_report(const Tensor& reps, const std::vector<int>& labels) {
  if (reps.rank() != 2 || reps.dim(0) != labels.size()) {
    throw DimensionError("cluster_report: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(reps.shape()));
  }
  const std::size_t n = reps.dim(0), C = reps.dim(1);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw ParameterError("cluster_report: need at least two labels");
  for (const auto& [label, idx] : members) {
    if (idx.size() < 2) {
      throw ParameterError("cluster_report: label " + std::to_string(label) +
                           " has fewer than two samples");
    }
  }

  auto X = reps.data();
  auto dist = [&](const double* p, const double* q) {
    double s = 0.0;
    for (std::size_t k = 0; k < C; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
    return std::sqrt(s);
  };
  auto row = [&](std::size_t i) { return X.data() + i * C; };

  ClusterReport rep;
  rep.num_labels = members.size();
  std::vector<std::vector<double>> sums;
  for (const auto& [label, idx] : members) {
    rep.label_ids.push_back(label);
    std::vector<double> s(C, 0.0);
    for (auto i : idx)
      for (std::size_t k = 0; k < C; ++k) s[k] += X[i * C + k];
    sums.push_back(std::move(s));
  }
  const std::size_t L = rep.num_labels;
  std::vector<std::vector<double>> centroids(L, std::vector<double>(C));
  for (std::size_t l = 0; l < L; ++l) {
    const double cnt = static_cast<double>(members[rep.label_ids[l]].size());
    for (std::size_t k = 0; k < C; ++k) centroids[l][k] = sums[l][k] / cnt;
  }
  rep.centroid_distances.assign(L * L, 0.0);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t q = 0; q < L; ++q)
      rep.centroid_distances[p * L + q] = dist(centroids[p].data(), centroids[q].data());

  auto label_index = [&](int label) {
    return static_cast<std::size_t>(
        std::lower_bound(rep.label_ids.begin(), rep.label_ids.end(), label) -
        rep.label_ids.begin());
  };

  // Leave-one-out: the sample's own centroid is recomputed without it.
  std::size_t correct = 0;
  std::vector<double> own(C);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t li = label_index(labels[i]);
    const double cnt = static_cast<double>(members[labels[i]].size());
    for (std::size_t k = 0; k < C; ++k) own[k] = (sums[li][k] - X[i * C + k]) / (cnt - 1.0);
    double best = dist(row(i), own.data());
    std::size_t best_label = li;
    for (std::size_t l = 0; l < L; ++l) {
      if (l == li) continue;
      const double d = dist(row(i), centroids[l].data());
      if (d < best) {
        best = d;
        best_label = l;
      }
    }
    if (best_label == li) ++correct;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  double sil = 0.0;
  bool any_spread = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t li = label_index(labels[i]);
    std::vector<double> mean_to(L, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_to[label_index(labels[j])] += dist(row(i), row(j));
    }
    double a = 0.0, b = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
      const double cnt = static_cast<double>(members[rep.label_ids[l]].size());
      if (l == li) {
        a = mean_to[l] / (cnt - 1.0);
      } else {
        b = std::min(b, mean_to[l] / cnt);
      }
    }
    if (a > 0.0) any_spread = true;
    const double denom = std::max(a, b);
    if (denom == 0.0) throw ParameterError("cluster_report: silhouette undefined (coincident clusters)");
    sil += (b - a) / denom;
  }
  if (!any_spread) {
    throw ParameterError("cluster_report: every label is a single repeated point; silhouette undefined");
  }
  rep.silhouette = sil / static_cast<double>(n);
  return rep;
}

void export_representations(const std::filesystem::path& dir, const Tensor& reps,
                            const std::vector<int>& labels) {
  std::filesystem::create_directories(dir);
  rdt::save(dir / "reps.rdt", reps);
  std::ofstream os(dir / "labels.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "labels.csv").string());
  os << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) os << i << ',' << labels[i] << '\n';
}

Tensor representations(const Model& model, const std::vector<Image>& lr) {
  if (lr.empty()) throw ParameterError("representations: no images");
  constexpr std::size_t kChunk = 32;
  std::vector<double> out;
  std::size_t C = 0;
  for (std::size_t i = 0; i < lr.size(); i += kChunk) {
    const std::vector<Image> chunk(lr.begin() + static_cast<long>(i),
                                   lr.begin() + static_cast<long>(std::min(lr.size(), i + kChunk)));
    const Tensor f = encode(model, to_batch(chunk)).f;
    C = f.dim(1);
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return Tensor({lr.size(), C}, std::move(out));
}

ProbeSet make_probe_set(const std::vector<Image>& hr_pool,
                        const std::vector<DegradationSpec>& specs, std::size_t per_spec,
                        std::size_t lr_patch, std::uint64_t seed) {
  if (hr_pool.empty() || specs.empty()) throw ParameterError("make_probe_set: empty pool or spec list");
  ProbeSet set;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::size_t P = lr_patch * specs[k].scale;
    for (std::size_t i = 0; i < per_spec; ++i) {
      Rng rng = make_rng(seed, {k, i});
      const Image& img = hr_pool[std::uniform_int_distribution<std::size_t>(0, hr_pool.size() - 1)(rng)];
      if (img.height < P || img.width < P) throw DimensionError("make_probe_set: image too small");
      const std::size_t y = std::uniform_int_distribution<std::size_t>(0, img.height - P)(rng);
      const std::size_t x = std::uniform_int_distribution<std::size_t>(0, img.width - P)(rng);
      set.lr.push_back(degrade(img.crop(y, x, P, P), specs[k], rng()));
      set.labels.push_back(static_cast<int>(k));
    }
  }
  return set;
}

Image super_resolve(const Model& model, const Image& lr) {
  const Tensor batch = to_batch({lr});
  const Encoding enc = encode(model, batch);
  Image sr = from_batch(generate(model, batch, enc.f.detach())).front();
  for (auto& v : sr.values) v = std::clamp(v, 0.0, 1.0);
  return sr;
}

SweepResult robustness_sweep(const Model& model, const std::vector<Image>& hr_pool,
                             const DegradationSpec& spec, std::size_t n_contents,
                             std::size_t lr_patch, std::uint64_t noise_seed) {
  if (n_contents == 0) throw ParameterError("robustness_sweep: need at least one content");
  if (hr_pool.size() < n_contents) {
    throw ParameterError("robustness_sweep: pool of " + std::to_string(hr_pool.size()) +
                         " images exhausted by " + std::to_string(n_contents) + " contents");
  }
  const std::size_t P = lr_patch * spec.scale;
  auto centre_crop = [P](const Image& img) {
    if (img.height < P || img.width < P) throw DimensionError("robustness_sweep: image too small");
    return img.crop((img.height - P) / 2, (img.width - P) / 2, P, P);
  };
  const Image target_hr = centre_crop(hr_pool[0]);
  const Image target_lr = degrade(target_hr, spec, noise_seed);
  const Tensor target_batch = to_batch({target_lr});

  std::vector<Image> content_lr;
  for (std::size_t i = 0; i < n_contents; ++i) {
    content_lr.push_back(i == 0 ? target_lr : degrade(centre_crop(hr_pool[i]), spec, noise_seed + i));
  }
  const Tensor reps = encode(model, to_batch(content_lr)).f.detach();

  SweepResult out;
  const std::size_t C = reps.dim(1);
  for (std::size_t i = 0; i < n_contents; ++i) {
    std::vector<double> row(reps.data().begin() + static_cast<long>(i * C),
                            reps.data().begin() + static_cast<long>((i + 1) * C));
    const Tensor f({1, C}, std::move(row));
    Image sr = from_batch(generate(model, target_batch, f)).front();
    for (auto& v : sr.values) v = std::clamp(v, 0.0, 1.0);
    out.psnr.push_back(psnr(sr, target_hr));
  }
  const double n = static_cast<double>(out.psnr.size());
  out.mean = std::accumulate(out.psnr.begin(), out.psnr.end(), 0.0) / n;
  double var = 0.0;
  for (double p : out.psnr) var += (p - out.mean) * (p - out.mean);
  out.std = std::sqrt(var / n);
  out.min = *std::min_element(out.psnr.begin(), out.psnr.end());
  out.max = *std::max_element(out.psnr.begin(), out.psnr.end());
  return out;
}

}  // namespace redsr
