#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "robarch/adversarial.hpp"
#include "robarch/archspec.hpp"
#include "robarch/cli.hpp"
#include "robarch/dataset.hpp"
#include "robarch/designspace.hpp"
#include "robarch/errors.hpp"
#include "robarch/netbuild.hpp"

namespace py = pybind11;
using namespace robarch;

namespace {

std::vector<std::pair<int, int>> stage_pairs(const ArchitectureSpec& s) {
  std::vector<std::pair<int, int>> out;
  for (const auto& st : s.stages) out.emplace_back(st.depth, st.width);
  return out;
}

std::vector<StageSpec> to_stages(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<StageSpec> out;
  for (const auto& [d, w] : pairs) out.push_back({d, w});
  return out;
}

Principle principle(const std::string& name) {
  const auto p = parse_principle(name);
  if (!p) throw ParamError("unknown principle '" + name + "'");
  return *p;
}

}  // namespace

PYBIND11_MODULE(robarch, m) {
  m.doc() = "Robust CNN architecture workbench";

  // Translators run most-recent first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<ParamError>(m, "ParamError", PyExc_ValueError);
  py::register_exception<DegenerateInput>(m, "DegenerateInput", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<ArchitectureSpec>(m, "Spec")
      .def_readwrite("name", &ArchitectureSpec::name)
      .def_readwrite("num_classes", &ArchitectureSpec::num_classes)
      .def_property(
          "stages", &stage_pairs,
          [](ArchitectureSpec& s, const std::vector<std::pair<int, int>>& p) { s.stages = to_stages(p); })
      .def("__eq__", [](const ArchitectureSpec& a, const ArchitectureSpec& b) { return a == b; })
      .def("__str__", [](const ArchitectureSpec& s) { return emit_spec(s); })
      .def("__repr__", [](const ArchitectureSpec& s) { return "<Spec " + s.name + ">"; });

  m.def("parse_spec", [](const std::string& text) { return parse_spec(text); });
  m.def("emit_spec", &emit_spec);
  m.def("load_spec", &load_spec_file, py::arg("path"));
  m.def("wd_ratio", &wd_ratio);
  m.def("count_params", &count_params, py::arg("spec"), py::arg("input_channels") = 3);
  m.def("validate", [](const ArchitectureSpec& s) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& v : validate(s)) out.emplace_back(v.field, v.rule);
    return out;
  });
  m.def("robustify_all", [](const ArchitectureSpec& s) { return robustify_all(s); });
  m.def(
      "robustify_step",
      [](const ArchitectureSpec& s, const std::string& p, std::optional<std::vector<std::pair<int, int>>> stages) {
        std::optional<std::vector<StageSpec>> st;
        if (stages) st = to_stages(*stages);
        return robustify_step(s, principle(p), st);
      },
      py::arg("spec"), py::arg("principle"), py::arg("stages") = py::none());
  m.def("registry_names", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : registry()) out.emplace_back(e.base_name, e.robust.name);
    return out;
  });
  m.def("registry_spec", [](const std::string& name) {
    const RegistryEntry* e = find_registry_entry(name);
    if (!e) throw SpecError("no built-in architecture named '" + name + "'");
    return name == e->robust.name ? e->robust : e->baseline;
  });

  m.def(
      "sample",
      [](std::uint64_t seed, std::size_t count, const ArchitectureSpec& templ, int max_depth, int max_width) {
        SampleBounds b;
        b.max_depth = max_depth;
        b.max_width = max_width;
        std::vector<py::dict> out;
        for (std::size_t i = 0; i < count; ++i) {
          const DesignSample s = sample_config(seed + i, b, templ);
          py::dict d;
          d["spec"] = s.spec;
          d["wd"] = s.wd;
          d["params"] = s.params;
          out.push_back(d);
        }
        return out;
      },
      py::arg("seed"), py::arg("count"), py::arg("template"), py::arg("max_depth") = 60,
      py::arg("max_width") = 1000);
  m.def("edf", [](const std::vector<double>& errors) {
    const EdfCurve c = compute_edf(errors);
    return std::make_pair(c.xs, c.ys);
  });
  m.def("pearson", &pearson);

  m.def(
      "describe",
      [](const ArchitectureSpec& s, std::tuple<int, int, int> input, std::uint64_t seed) {
        const auto [c, h, w] = input;
        const LayerTable t = describe(build_network(s, {c, h, w}, seed));
        std::vector<std::tuple<std::string, std::vector<std::size_t>, std::size_t>> rows;
        for (const auto& r : t.rows) rows.emplace_back(r.name, r.shape, r.count);
        return std::make_pair(rows, t.total);
      },
      py::arg("spec"), py::arg("input") = std::make_tuple(3, 32, 32), py::arg("seed") = 0);

  m.def(
      "gen_synthetic",
      [](std::uint64_t seed, std::size_t n, std::size_t size, int classes, std::size_t channels, double noise) {
        SyntheticOptions o;
        o.channels = channels;
        o.noise = noise;
        const Dataset d = gen_synthetic(seed, n, size, classes, o);
        py::dict out;
        out["pixels"] = d.pixels;
        out["labels"] = d.labels;
        out["shape"] = std::make_tuple(d.channels, d.height, d.width);
        out["hash"] = dataset_hash(d);
        return out;
      },
      py::arg("seed"), py::arg("n"), py::arg("size") = 16, py::arg("classes") = 2, py::arg("channels") = 3,
      py::arg("noise") = 0.1);

  m.def("cyclic_lr", &cyclic_lr);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return std::make_tuple(code, out.str(), err.str());
  });
}
