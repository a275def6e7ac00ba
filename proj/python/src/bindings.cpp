#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "condensor/dataset.hpp"
#include "condensor/error.hpp"
#include "condensor/indicator.hpp"
#include "condensor/manifest.hpp"
#include "condensor/mtt.hpp"
#include "condensor/selftest.hpp"
#include "condensor/synthetic.hpp"

namespace py = pybind11;
using namespace condensor;

namespace {

py::array_t<std::uint8_t> pixels_of(const Dataset& d) {
  py::array_t<std::uint8_t> a({static_cast<py::ssize_t>(d.n), static_cast<py::ssize_t>(d.channels),
                               static_cast<py::ssize_t>(d.height), static_cast<py::ssize_t>(d.width)});
  std::copy(d.pixels.begin(), d.pixels.end(), a.mutable_data());
  return a;
}

template <class T>
py::array_t<T> copy_out(const std::vector<T>& v) {
  py::array_t<T> a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Tensor vector_of(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  const auto n = static_cast<std::int64_t>(a.size());
  return Tensor::from({n}, std::vector<double>(a.data(), a.data() + n));
}

py::dict report_dict(const CorrelationReport& rep) {
  py::dict series;
  for (const auto& s : rep.series) series[py::str(s.method)] = s.r ? py::object(py::float_(*s.r)) : py::none();
  py::list decisions;
  for (const auto& d : rep.decisions) {
    py::dict row;
    row["dataset"] = d.dataset;
    row["method"] = d.method;
    row["accuracy_distilled"] = d.accuracy_distilled;
    row["accuracy_random"] = d.accuracy_random;
    row["decision"] = std::string(decision_name(d.decision));
    decisions.append(row);
  }
  py::dict out;
  out["r"] = series;
  out["decisions"] = decisions;
  out["point_set"] = rep.point_set;
  out["csv"] = report_csv(rep);
  out["svg"] = report_svg(rep);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "condensor engine bindings";
  m.attr("__version__") = kEngineVersion;

  // Translators run most recent first, so the base class goes first.
  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<DataError>(m, "DataError", base);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("n", &Dataset::n)
      .def_readonly("channels", &Dataset::channels)
      .def_readonly("height", &Dataset::height)
      .def_readonly("width", &Dataset::width)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readwrite("name", &Dataset::name)
      .def_readwrite("class_names", &Dataset::class_names)
      .def_property_readonly("pixels", &pixels_of)
      .def_property_readonly("labels", [](const Dataset& d) { return copy_out(d.labels); })
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset " + d.name + " n=" + std::to_string(d.n) + " " + std::to_string(d.channels) + "x" +
               std::to_string(d.height) + "x" + std::to_string(d.width) + " classes=" + std::to_string(d.num_classes) + ">";
      });

  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def(
      "load_synthetic",
      [](const std::filesystem::path& p) {
        auto s = load_synthetic(p);
        const auto& sh = s.images.shape();
        py::array_t<float> img(std::vector<py::ssize_t>(sh.begin(), sh.end()));
        const auto v = s.images.to_vector();
        std::copy(v.begin(), v.end(), img.mutable_data());
        py::dict d;
        d["images"] = img;
        d["labels"] = copy_out(s.labels);
        d["ipc"] = s.ipc;
        d["num_classes"] = s.num_classes;
        d["alpha"] = s.alpha ? py::object(py::float_(*s.alpha)) : py::none();
        d["name"] = s.name;
        return d;
      },
      py::arg("path"));
  m.def(
      "make_texture_dataset",
      [](int classes, int channels, int size, std::int64_t train, std::int64_t test, std::uint64_t seed) {
        TextureSpec s;
        s.num_classes = classes;
        s.channels = channels;
        s.size = size;
        s.train = train;
        s.test = test;
        s.seed = seed;
        return make_texture_dataset(s);
      },
      py::arg("classes") = 4, py::arg("channels") = 1, py::arg("size") = 16, py::arg("train") = 2000,
      py::arg("test") = 1000, py::arg("seed") = 0);

  m.def("pearson_r", [](const std::vector<std::pair<double, double>>& pts) { return pearson_r(pts); }, py::arg("points"));
  m.def(
      "sharing_decision",
      [](double distilled, double random) { return std::string(decision_name(sharing_decision(distilled, random))); },
      py::arg("acc_distilled_50"), py::arg("acc_random_50"));
  m.def(
      "indicator_report",
      [](const std::filesystem::path& results, int decision_ipc, bool welch) {
        ReportOptions o;
        o.decision_ipc = decision_ipc;
        o.welch = welch;
        return report_dict(correlation_report(records_from_results(read_results_csv(results)), o));
      },
      py::arg("results_csv"), py::arg("decision_ipc") = 50, py::arg("welch") = false);
  m.def(
      "trajectory_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& student,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& start,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& target) {
        return trajectory_loss(vector_of(student), vector_of(start), vector_of(target)).item();
      },
      py::arg("student"), py::arg("start"), py::arg("target"));
  m.def(
      "git_blob_sha1", [](const py::bytes& b) {
        const std::string s = b;
        return git_blob_sha1(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      },
      py::arg("data"));
  m.def(
      "selftest",
      [](bool quick) {
        auto checks = algebraic_suite();
        if (!quick) {
          auto g = gradient_suite();
          checks.insert(checks.end(), g.begin(), g.end());
        }
        py::list out;
        for (const auto& c : checks) out.append(py::make_tuple(c.name, c.pass, c.detail));
        return out;
      },
      py::arg("quick") = true);
}
