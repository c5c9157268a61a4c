#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gmprune/bayesopt.hpp"
#include "gmprune/checkpoint.hpp"
#include "gmprune/dataset.hpp"
#include "gmprune/fpgm.hpp"
#include "gmprune/objective.hpp"
#include "gmprune/pipeline.hpp"
#include "gmprune/train.hpp"

namespace py = pybind11;
using namespace gmprune;

namespace {

fpgm::FilterMatrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& points) {
  if (points.ndim() != 2) throw std::invalid_argument("points must be a 2-D array (filters x values)");
  const auto rows = static_cast<std::size_t>(points.shape(0)), cols = static_cast<std::size_t>(points.shape(1));
  return fpgm::FilterMatrix(rows, cols, std::vector<double>(points.data(), points.data() + points.size()));
}

pipeline::PipelineConfig config_from(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw pipeline::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return pipeline::parse_config(j);
}

}  // namespace

PYBIND11_MODULE(_gmprune, m) {
  m.doc() = "Geometric-median filter pruning with Bayesian per-group rate search";

  py::register_exception<pipeline::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<pipeline::StageError>(m, "StageError", PyExc_RuntimeError);

  m.def(
      "geometric_median",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points, double tol, int max_iter) {
        const auto r = fpgm::geometric_median(to_matrix(points), tol, max_iter);
        py::dict out;
        out["median"] = r.median;
        out["distances"] = r.distances;
        out["iterations"] = r.iterations_used;
        out["converged"] = r.converged;
        return out;
      },
      py::arg("points"), py::arg("tol") = fpgm::kDefaultTolerance, py::arg("max_iter") = fpgm::kDefaultMaxIterations);

  m.def(
      "rank_filters",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points) {
        const auto f = to_matrix(points);
        return fpgm::rank_filters(f, fpgm::geometric_median(f));
      },
      py::arg("points"), "Filter indices, closest to the geometric median first.");

  m.def("prune_count", &fpgm::prune_count, py::arg("rate"), py::arg("filters"));
  m.def("sparsity_penalty", &objective::sparsity_penalty, py::arg("sparsity"), py::arg("target"));

  m.def(
      "make_synthetic",
      [](std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size) {
        const auto d = data::make_synthetic(seed, n, classes, size);
        py::array_t<float> images({n, std::size_t{1}, size, size});
        std::copy(d.images.data().begin(), d.images.data().end(), images.mutable_data());
        py::array_t<std::uint32_t> labels(n);
        std::copy(d.labels.begin(), d.labels.end(), labels.mutable_data());
        return py::make_tuple(images, labels);
      },
      py::arg("seed"), py::arg("n"), py::arg("classes") = 4, py::arg("size") = 16);

  m.def(
      "bayes_optimize",
      [](const std::function<double(std::vector<double>)>& f, std::vector<double> low, std::vector<double> high,
         std::size_t i0, std::size_t iterations, double kappa, std::uint64_t seed) {
        bo::BOConfig cfg;
        cfg.i0 = i0;
        cfg.iterations = iterations;
        cfg.kappa = kappa;
        cfg.seed = seed;
        const auto r = bo::optimize(
            [&](std::span<const double> x) {
              return bo::Evaluation{f(std::vector<double>(x.begin(), x.end())), false};
            },
            bo::Bounds{std::move(low), std::move(high)}, cfg);
        py::list history;
        for (const auto& h : r.history) history.append(py::make_tuple(h.x, h.value));
        py::dict out;
        out["best_x"] = r.best_x;
        out["best_value"] = r.best_value;
        out["history"] = history;
        return out;
      },
      py::arg("f"), py::arg("low"), py::arg("high"), py::arg("i0") = 12, py::arg("iterations") = 60,
      py::arg("kappa") = 2.0, py::arg("seed") = 0);

  m.def(
      "normalize_config",
      [](const std::string& config_json) { return pipeline::to_json(config_from(config_json)).dump(); },
      py::arg("config_json"), "Validates a JSON config and returns it with every default filled in.");

  m.def(
      "run",
      [](const std::string& config_json, const std::string& out_dir) {
        const auto cfg = config_from(config_json);
        pipeline::RunReport report;
        {
          py::gil_scoped_release release;
          report = pipeline::run(cfg, {out_dir});
        }
        return report.to_json().dump();
      },
      py::arg("config_json"), py::arg("out_dir") = "", "Full pipeline; returns the run report as JSON text.");

  m.def(
      "compare",
      [](const std::string& config_json, const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
        const auto cfg = config_from(config_json);
        pipeline::Comparison cmp;
        {
          py::gil_scoped_release release;
          cmp = pipeline::compare_modes(cfg, seeds, out_dir);
        }
        std::ostringstream csv;
        pipeline::write_comparison_csv(csv, cmp);
        return csv.str();
      },
      py::arg("config_json"), py::arg("seeds"), py::arg("out_dir") = "", "Both modes per seed; returns CSV text.");

  m.def(
      "evaluate_checkpoint",
      [](const std::string& path, const std::string& config_json) {
        const auto cfg = config_from(config_json);
        const auto net = nn::load_checkpoint(path);
        const auto data = pipeline::load_datasets(cfg);
        const auto metrics = nn::evaluate(net, data.test);
        const auto s = group::sparsity(net, pipeline::make_grouping(net, cfg));
        py::dict out;
        out["accuracy"] = metrics.accuracy;
        out["loss"] = metrics.loss;
        out["sparsity"] = s.overall;
        out["per_group"] = s.per_group;
        return out;
      },
      py::arg("path"), py::arg("config_json") = "{}");
}
