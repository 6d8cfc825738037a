#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "depgraph/config.hpp"
#include "depgraph/encoders.hpp"
#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"
#include "depgraph/metrics.hpp"
#include "depgraph/pipeline.hpp"
#include "depgraph/report.hpp"

namespace py = pybind11;
using namespace depgraph;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SliceFeatureMatrix to_features(const Array& a) {
  if (a.ndim() != 2) throw DomainError("expected a 2-D array of shape (slices, features)");
  SliceFeatureMatrix f;
  f.values = Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), f.values.data.begin());
  return f;
}

Array to_array(const Matrix& m) {
  Array out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["n"] = m.n;
  d["rmse"] = m.rmse;
  d["mae"] = m.mae;
  d["pcc"] = m.pcc ? py::cast(*m.pcc) : py::none();
  d["ccc"] = m.ccc ? py::cast(*m.ccc) : py::none();
  return d;
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

RunConfig config_from(const std::string& json_text, const std::vector<std::string>& overrides) {
  return parse_run_config(json_text, overrides);
}

}  // namespace

PYBIND11_MODULE(_depgraph, m) {
  m.doc() = "Two-stage video depression severity pipeline";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "compute_metrics",
      [](const std::vector<double>& predictions, const std::vector<double>& ground_truth) {
        return metrics_dict(compute_metrics(predictions, ground_truth));
      },
      py::arg("predictions"), py::arg("ground_truth"),
      "RMSE, MAE, PCC and CCC; pcc/ccc are None where undefined.");

  m.def(
      "spectral_encode_series",
      [](const std::vector<double>& series, std::size_t grid_bins, std::size_t top_k, bool remove_mean) {
        return spectral_encode_series(series, grid_bins, top_k, remove_mean);
      },
      py::arg("series"), py::arg("grid_bins") = 128, py::arg("top_k") = 24, py::arg("remove_mean") = false);

  m.def(
      "build_spg",
      [](const Array& features, std::size_t grid_bins, std::size_t top_k, bool remove_mean) {
        const SpectralGraph g = build_spg(to_features(features), SpectralConfig{grid_bins, top_k, remove_mean});
        const std::size_t n = g.vertex_features.rows;
        py::array_t<std::uint8_t> adj({n, n});
        std::copy(g.adjacency.begin(), g.adjacency.end(), adj.mutable_data());
        return py::make_tuple(to_array(g.vertex_features), adj);
      },
      py::arg("features"), py::arg("grid_bins") = 128, py::arg("top_k") = 24, py::arg("remove_mean") = false,
      "Vertex features (M, top_k) and the M x M adjacency of the spectral graph.");

  m.def(
      "build_seg",
      [](const Array& features, const std::vector<std::size_t>& windows) {
        const SequentialGraph g = build_seg(to_features(features), windows);
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> edges;
        for (const auto& e : g.edges) edges.emplace_back(e.src, e.dst, e.window);
        return edges;
      },
      py::arg("features"), py::arg("windows") = std::vector<std::size_t>{1, 2, 4, 8},
      "Edges (src, dst, window) of the sequential graph.");

  m.def(
      "default_config", [] { return json_loads(run_config_to_json(RunConfig{})); },
      "Every configuration key with its default.");

  m.def(
      "resolve_config",
      [](const std::string& json_text, const std::vector<std::string>& overrides) {
        return json_loads(run_config_to_json(config_from(json_text, overrides)));
      },
      py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "run_pipeline",
      [](const std::string& json_text, const std::vector<std::string>& overrides) {
        const RunConfig cfg = config_from(json_text, overrides);
        EvaluationReport r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(cfg);
        }
        return json_loads(report_to_json(r));
      },
      py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
      "Runs every stage (reusing cached ones) and returns the evaluation report.");

  m.def(
      "cross_split_evaluate",
      [](const std::string& json_text, const std::string& manifest, const std::string& split,
         const std::vector<std::string>& overrides) {
        const RunConfig cfg = config_from(json_text, overrides);
        const Corpus corpus = load_corpus(manifest);
        std::optional<Split> which;
        if (split != "all") which = parse_split(split);
        EvaluationReport r;
        {
          py::gil_scoped_release release;
          r = cross_split_evaluate(cfg, corpus, which, cfg.threads);
        }
        return json_loads(report_to_json(r));
      },
      py::arg("config_json"), py::arg("manifest"), py::arg("split") = "test",
      py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "synthesize",
      [](const std::string& json_text, const std::string& out_dir, const std::vector<std::string>& overrides) {
        const RunConfig cfg = config_from(json_text, overrides);
        save_corpus(generate_synthetic_corpus(cfg.corpus.synth, cfg.synth_seed()), out_dir);
        return (std::filesystem::path(out_dir) / "manifest.csv").string();
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("overrides") = std::vector<std::string>{},
      "Writes a synthetic corpus and returns the manifest path.");

  m.def(
      "read_report", [](const std::string& path) { return json_loads(report_to_json(read_report(path))); },
      py::arg("path"));
}
