#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "redsr/errors.hpp"
#include "redsr/metrics.hpp"
#include "redsr/rdt.hpp"
#include "redsr/selftest.hpp"
#include "redsr/synthetic.hpp"
#include "redsr/training.hpp"

namespace py = pybind11;
using namespace redsr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, bool requires_grad = false) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()), requires_grad);
}

Array to_array(std::span<const double> data, const Shape& shape) {
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  Array out(dims);
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

Array to_array(const Tensor& t) { return to_array(t.data(), t.shape()); }

Image to_image(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected a [channels, height, width] array");
  Image img(a.shape(1), a.shape(2), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), img.values.begin());
  return img;
}

Array image_array(const Image& img) { return to_array(img.values, {img.channels, img.height, img.width}); }

DegradationSpec make_spec(double sigma1, std::optional<double> sigma2, double theta, double noise,
                          std::size_t scale) {
  return {sigma1, sigma2.value_or(sigma1), theta, noise, scale};
}

nlohmann::json to_json(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict record_dict(const TrainRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["loss_rd"] = r.loss_rd;
  d["loss_ed"] = r.loss_ed;
  d["loss_sr"] = r.loss_sr;
  d["loss_total"] = r.loss_total;
  d["mean_w"] = r.mean_w;
  d["lr"] = r.lr;
  return d;
}

}  // namespace

PYBIND11_MODULE(_redsr, m) {
  m.doc() = "redsr C++ core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

  // Degradation
  m.def(
      "make_kernel",
      [](double sigma1, std::optional<double> sigma2, double theta) {
        const BlurKernel k = make_kernel(make_spec(sigma1, sigma2, theta, 0.0, 1));
        return to_array(k.weights, {kKernelSize, kKernelSize});
      },
      py::arg("sigma1"), py::arg("sigma2") = py::none(), py::arg("theta") = 0.0,
      "Normalized 21x21 anisotropic Gaussian blur kernel.");
  m.def(
      "degrade",
      [](const Array& hr, double sigma1, std::optional<double> sigma2, double theta, double noise,
         std::size_t scale, std::uint64_t seed) {
        return image_array(degrade(to_image(hr), make_spec(sigma1, sigma2, theta, noise, scale), seed));
      },
      py::arg("hr"), py::arg("sigma1"), py::arg("sigma2") = py::none(), py::arg("theta") = 0.0,
      py::arg("noise") = 0.0, py::arg("scale") = 2, py::arg("seed") = 0,
      "Blur with reflect padding, decimate by `scale`, add Gaussian noise (std on the 0-255 scale).");
  m.def(
      "synthetic_texture", [](std::size_t size, std::uint64_t seed) { return image_array(synthetic_texture(size, seed)); },
      py::arg("size"), py::arg("seed"));
  m.def(
      "gen_dataset",
      [](const std::filesystem::path& hr_dir, std::size_t count, const std::string& mode, std::uint64_t seed,
         std::size_t lr_patch, std::size_t scale, const std::filesystem::path& out) {
        return gen_dataset(hr_dir, {count, parse_mode(mode), seed, lr_patch, scale}, out).size();
      },
      py::arg("hr_dir"), py::arg("count"), py::arg("mode") = "anisotropic+noise", py::arg("seed") = 0,
      py::arg("lr_patch") = 32, py::arg("scale") = 2, py::arg("out"));
  m.def(
      "read_manifest",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& e : read_manifest(path)) {
          py::dict d;
          d["id"] = e.id;
          d["sigma1"] = e.spec.sigma1;
          d["sigma2"] = e.spec.sigma2;
          d["theta"] = e.spec.theta;
          d["noise"] = e.spec.noise_level;
          d["scale"] = e.spec.scale;
          d["hr_file"] = e.hr_file;
          d["lr_file"] = e.lr_file;
          d["noise_seed"] = e.noise_seed;
          out.append(d);
        }
        return out;
      },
      py::arg("path"));

  // Tensors on disk
  m.def("rdt_load", [](const std::filesystem::path& p) { return to_array(rdt::load(p)); }, py::arg("path"));
  m.def("rdt_save", [](const std::filesystem::path& p, const Array& a) { rdt::save(p, to_tensor(a)); },
        py::arg("path"), py::arg("array"));

  // Losses. Functions of representations also return the gradient.
  m.def(
      "loss_ed",
      [](const Array& f, const Array& t) {
        Tensor ft = to_tensor(f, true);
        const Tensor loss = loss_ed(ft, to_tensor(t));
        loss.backward();
        return py::make_tuple(loss.item(), to_array(ft.grad(), ft.shape()));
      },
      py::arg("f"), py::arg("t"), "Energy distance between row sets; returns (value, d value / d f).");
  m.def(
      "loss_kl",
      [](const Array& mu, const Array& logvar) { return loss_kl(to_tensor(mu), to_tensor(logvar)).item(); },
      py::arg("mu"), py::arg("logvar"));
  m.def(
      "loss_sr",
      [](const Array& sr, const Array& hr, std::optional<std::vector<double>> w) {
        return w ? loss_sr(to_tensor(sr), to_tensor(hr), *w).item() : loss_sr(to_tensor(sr), to_tensor(hr)).item();
      },
      py::arg("sr"), py::arg("hr"), py::arg("w") = py::none());
  m.def("modulation_coefficient", &modulation_coefficient, py::arg("d"), "W = 2 / (1 + d).");

  // Metrics
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); }, py::arg("a"), py::arg("b"));
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); }, py::arg("a"), py::arg("b"));
  m.def(
      "cluster_report",
      [](const Array& reps, const std::vector<int>& labels) {
        const ClusterReport r = cluster_report(to_tensor(reps), labels);
        const std::size_t L = r.num_labels;
        py::dict d;
        d["num_labels"] = L;
        d["accuracy"] = r.accuracy;
        d["silhouette"] = r.silhouette;
        d["labels"] = r.label_ids;
        d["centroid_distances"] = to_array(r.centroid_distances, {L, L});
        return d;
      },
      py::arg("reps"), py::arg("labels"));
  m.def(
      "selftest",
      [] {
        py::list out;
        for (const auto& c : run_selftest()) {
          py::dict d;
          d["name"] = c.name;
          d["value"] = c.value;
          d["limit"] = c.limit;
          d["pass"] = c.pass;
          out.append(d);
        }
        return out;
      },
      "Gradient checks and loss identities; one dict per check.");

  // Models and training
  py::class_<Model>(m, "Model")
      .def_static(
          "init",
          [](const py::dict& arch, std::uint64_t seed) {
            // Unspecified keys keep their defaults.
            nlohmann::json j = Architecture{}.to_json();
            const nlohmann::json given = to_json(arch);
            for (const auto& [key, value] : given.items()) {
              if (!j.contains(key)) throw ConfigError("unknown architecture key '" + key + "'");
              j[key] = value;
            }
            return Model::init(Architecture::from_json(j), seed);
          },
          py::arg("architecture") = py::dict(), py::arg("seed") = 1)
      .def_property_readonly("architecture", [](const Model& self) { return from_json(self.arch.to_json()); })
      .def_property_readonly("parameter_names",
                             [](const Model& self) {
                               std::vector<std::string> names;
                               for (const auto& [name, t] : self.params) names.push_back(name);
                               return names;
                             })
      .def("parameter", [](const Model& self, const std::string& name) { return to_array(self.param(name)); })
      .def(
          "encode", [](const Model& self, const Array& lr) { return to_array(encode(self, to_tensor(lr)).f); },
          py::arg("lr"), "Representations [N, repr_dim] for an LR batch [N, 3, h, w].")
      .def(
          "degrade",
          [](const Model& self, const Array& hr, const Array& f) {
            return to_array(degrade_net(self, to_tensor(hr), to_tensor(f)));
          },
          py::arg("hr"), py::arg("f"))
      .def(
          "generate",
          [](const Model& self, const Array& lr, const Array& f) {
            return to_array(generate(self, to_tensor(lr), to_tensor(f)));
          },
          py::arg("lr"), py::arg("f"))
      .def(
          "super_resolve", [](const Model& self, const Array& lr) { return image_array(super_resolve(self, to_image(lr))); },
          py::arg("lr"))
      .def(
          "save",
          [](const Model& self, const std::filesystem::path& path, std::uint64_t step) {
            save_checkpoint(path, self, nullptr, step);
          },
          py::arg("path"), py::arg("step") = 0);

  m.def(
      "load_checkpoint", [](const std::filesystem::path& path) { return load_checkpoint(path).model; },
      py::arg("path"));
  m.def(
      "train",
      [](const py::dict& config, const std::filesystem::path& out_dir, std::optional<std::filesystem::path> resume) {
        const TrainConfig c = TrainConfig::from_json(to_json(config));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(c, load_training_images(c), out_dir, resume);
        }
        py::list log;
        for (const auto& rec : r.log) log.append(record_dict(rec));
        return py::make_tuple(std::move(r.model), log);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("resume") = py::none(),
      "Train with TrainConfig keys; returns (model, log rows).");
}
