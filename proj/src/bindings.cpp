#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <weakpde/run_config.hpp>
#include <weakpde/synthetic_data.hpp>
#include <weakpde/weight_engine.hpp>

namespace py = pybind11;
using namespace weakpde;

namespace {

DomainBox box_from(const py::dict& d) {
  DomainBox box;
  const auto lo = d["domain_lo"].cast<std::vector<double>>();
  const auto hi = d["domain_hi"].cast<std::vector<double>>();
  box.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), lo.size());
  box.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), hi.size());
  return box;
}

Dataset dataset_from(const py::dict& d) {
  Dataset ds;
  ds.t = d["t"].cast<Eigen::VectorXd>();
  ds.x = d["x"].cast<Eigen::VectorXd>();
  ds.value = d["value"].cast<Eigen::VectorXd>();
  ds.domain = box_from(d);
  if (d.contains("preset")) ds.preset = d["preset"].cast<std::string>();
  if (d.contains("noise_level"))
    ds.noise_level = d["noise_level"].cast<double>();
  if (d.contains("sigma_nf")) ds.sigma_nf = d["sigma_nf"].cast<double>();
  if (d.contains("seed")) ds.seed = d["seed"].cast<std::uint64_t>();
  return ds;
}

py::dict dataset_to(const Dataset& ds) {
  py::dict d;
  d["t"] = ds.t;
  d["x"] = ds.x;
  d["value"] = ds.value;
  d["domain_lo"] = std::vector<double>(ds.domain.lo.begin(), ds.domain.lo.end());
  d["domain_hi"] = std::vector<double>(ds.domain.hi.begin(), ds.domain.hi.end());
  d["preset"] = ds.preset;
  d["noise_level"] = ds.noise_level;
  d["sigma_nf"] = ds.sigma_nf;
  d["seed"] = ds.seed;
  return d;
}

// Options share the config-file vocabulary, so one stringify step lets the
// same parser validate both surfaces.
std::string option_text(const std::string& key, const py::handle& value) {
  if (py::isinstance<py::str>(value)) return value.cast<std::string>();
  if (py::isinstance<py::bool_>(value))
    throw ConfigError("config: " + key + ": expected a number or string");
  if (py::isinstance<py::int_>(value))
    return std::to_string(value.cast<long long>());
  if (py::isinstance<py::float_>(value)) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", value.cast<double>());
    return buf;
  }
  throw ConfigError("config: " + key + ": expected a number or string");
}

CoefficientVector coefficients_from(const std::vector<double>& values,
                                    const std::vector<bool>& active) {
  if (values.size() != active.size())
    throw std::runtime_error("values and active must have the same length");
  CoefficientVector xi = CoefficientVector::zeros(static_cast<int>(values.size()));
  for (size_t m = 0; m < values.size(); ++m) {
    xi.values[static_cast<Eigen::Index>(m)] = values[m];
    xi.active[m] = active[m] ? 1 : 0;
  }
  return xi;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "weak-form PDE discovery core";
  mod.attr("__version__") = "0.1.0";

  mod.def("bump", &bump_1d, py::arg("s"), py::arg("center"), py::arg("radius"),
          py::arg("beta") = 5.0, py::arg("order") = 0,
          "n-th derivative of the compactly supported bump weight");

  mod.def(
      "parse_term",
      [](const std::string& text) { return format_term(parse_term(text)); },
      py::arg("text"), "canonical spelling of a candidate term");

  mod.def(
      "default_library",
      []() {
        const LibrarySpec lib = LibrarySpec::default_1d();
        py::dict d;
        d["lhs"] = format_term(lib.lhs);
        std::vector<std::string> rhs;
        for (const auto& t : lib.rhs) rhs.push_back(format_term(t));
        d["rhs"] = rhs;
        return d;
      },
      "the 13-term 1-D candidate library");

  mod.def(
      "format_pde",
      [](const std::string& lhs, const std::vector<std::string>& terms,
         const std::vector<double>& values, const std::vector<bool>& active) {
        LibrarySpec lib;
        lib.lhs = parse_term(lhs);
        for (const auto& t : terms) lib.rhs.push_back(parse_term(t));
        return format_pde(lib, coefficients_from(values, active));
      },
      py::arg("lhs"), py::arg("terms"), py::arg("values"), py::arg("active"),
      "render an identified equation as text");

  mod.def(
      "solve_preset",
      [](const std::string& name) {
        const GridSolution g = solve_etdrk4(preset_by_name(name));
        py::dict d;
        d["t"] = g.tgrid;
        d["x"] = g.xgrid;
        d["u"] = g.u;
        d["preset"] = g.preset;
        d["domain_lo"] =
            std::vector<double>(g.domain.lo.begin(), g.domain.lo.end());
        d["domain_hi"] =
            std::vector<double>(g.domain.hi.begin(), g.domain.hi.end());
        return d;
      },
      py::arg("preset"), "integrate one preset on the full periodic grid");

  mod.def(
      "generate",
      [](const std::string& preset, int n, double noise, std::uint64_t seed) {
        const GridSolution g = solve_etdrk4(preset_by_name(preset));
        return dataset_to(corrupt(g, n, noise, seed));
      },
      py::arg("preset"), py::arg("n") = 4000, py::arg("noise") = 0.25,
      py::arg("seed") = 1, "solve a preset and sample noisy scattered points");

  mod.def(
      "run_training",
      [](const py::object& data, const py::dict& options) {
        RunConfig cfg;
        std::vector<Dataset> datasets;
        if (py::isinstance<py::dict>(data)) {
          datasets.push_back(dataset_from(data.cast<py::dict>()));
        } else {
          for (const auto& item : data.cast<py::list>())
            datasets.push_back(dataset_from(item.cast<py::dict>()));
        }
        for (const auto& item : options) {
          const std::string key = item.first.cast<std::string>();
          if (key == "terms" && py::isinstance<py::list>(item.second)) {
            cfg.terms = item.second.cast<std::vector<std::string>>();
            continue;
          }
          apply_kv(cfg, key, option_text(key, item.second));
        }
        const LibrarySpec lib = cfg.library();
        cfg.train.validate();

        TrainResult res;
        {
          py::gil_scoped_release release;
          res = run_training(cfg.train, datasets, lib, nullptr);
        }
        py::dict out;
        out["pde"] = res.pde;
        out["lhs"] = format_term(lib.lhs);
        std::vector<std::string> terms;
        for (const auto& t : lib.rhs) terms.push_back(format_term(t));
        out["terms"] = terms;
        out["values"] = res.xi.values;
        std::vector<bool> active;
        for (const auto a : res.xi.active) active.push_back(a != 0);
        out["active"] = active;
        out["epochs_per_phase"] = res.epochs_per_phase;
        py::list history;
        for (const auto& h : res.history) {
          py::dict row;
          row["epoch"] = h.epoch;
          row["phase"] = h.phase;
          row["data"] = h.data;
          row["weak"] = h.weak;
          row["lp"] = h.lp;
          row["active"] = h.active;
          row["K"] = h.k_rows;
          history.append(row);
        }
        out["history"] = history;
        return out;
      },
      py::arg("data"), py::arg("options") = py::dict(),
      "identify a sparse PDE from one dataset dict or a list of them");

  mod.def(
      "evaluate_checkpoint",
      [](const std::string& path, const Eigen::VectorXd& t,
         const Eigen::VectorXd& x) {
        if (t.size() != x.size())
          throw std::runtime_error("t and x must have the same length");
        const auto [cfg, params] = load_network(path);
        Eigen::ArrayXXd pts(t.size(), 2);
        pts.col(0) = t;
        pts.col(1) = x;
        return Eigen::VectorXd(evaluate(cfg, params, pts).matrix());
      },
      py::arg("path"), py::arg("t"), py::arg("x"),
      "evaluate a saved surrogate checkpoint at scattered points");
}
