#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <random>

#include "advrep/data.hpp"
#include "advrep/error.hpp"
#include "advrep/graph.hpp"
#include "advrep/manifold.hpp"
#include "advrep/pipeline.hpp"
#include "advrep/shapley.hpp"

namespace py = pybind11;
using namespace advrep;

namespace {

py::dict shapley_row(const ShapleyRow& r) {
  py::dict d;
  d["phi"] = r.phi;
  d["base"] = r.base;
  d["output"] = r.output;
  return d;
}

// Python callables get a 2-D float array and return one value per row.
BatchFn wrap(const py::function& f) {
  return [f](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    py::gil_scoped_acquire gil;
    return f(X).cast<Eigen::VectorXd>();
  };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial representation pipeline: synthetic data, attribution, clustering metrics and stages.";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<LabelError>(m, "LabelError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def(
      "synth",
      [](std::uint64_t seed, std::size_t n_per_domain, std::size_t n_domains, std::size_t n_features,
         double domain_effect, double label_effect, std::vector<double> label_rates) {
        SynthConfig c;
        c.seed = seed;
        c.n_per_domain = n_per_domain;
        c.n_domains = n_domains;
        c.n_features = n_features;
        c.domain_effect = domain_effect;
        c.label_effect = label_effect;
        c.label_rates = std::move(label_rates);
        const SynthData s = synth_generate(c);
        py::dict d;
        d["X"] = s.data.X;
        d["domain"] = s.data.domain;
        d["label"] = s.data.label;
        d["feature_names"] = s.data.feature_names;
        d["label_features"] = s.truth.label_features;
        d["domain_features"] = s.truth.domain_features;
        return d;
      },
      py::arg("seed"), py::arg("n_per_domain") = 200, py::arg("n_domains") = 6, py::arg("n_features") = 200,
      py::arg("domain_effect") = 3.0, py::arg("label_effect") = 0.8, py::arg("label_rates") = std::vector<double>{0.3});

  m.def(
      "exact_shapley",
      [](const py::function& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference) {
        return shapley_row(exact_shapley(wrap(f), x, reference));
      },
      py::arg("f"), py::arg("x"), py::arg("reference"));
  m.def(
      "kernel_shap",
      [](const py::function& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference, std::size_t n_coalitions,
         std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return shapley_row(kernel_shap(wrap(f), x, reference, n_coalitions, rng));
      },
      py::arg("f"), py::arg("x"), py::arg("reference"), py::arg("n_coalitions"), py::arg("seed") = 0);
  m.def(
      "violin_transform",
      [](const Eigen::MatrixXd& values, double alpha, double b, double eps) {
        return violin_transform(values, alpha, b, eps);
      },
      py::arg("values"), py::arg("alpha") = -2.0, py::arg("base") = 10.0, py::arg("eps") = 1e-9);

  m.def(
      "silhouette", [](const Eigen::MatrixXd& X, const std::vector<int>& labels) { return silhouette(X, labels); },
      py::arg("X"), py::arg("labels"));
  m.def(
      "calinski_harabasz",
      [](const Eigen::MatrixXd& X, const std::vector<int>& labels) { return calinski_harabasz(X, labels); },
      py::arg("X"), py::arg("labels"));
  m.def(
      "lowess",
      [](const std::vector<double>& x, const std::vector<double>& y, double frac) { return lowess(x, y, frac); },
      py::arg("x"), py::arg("y"), py::arg("frac") = 0.3);

  m.def(
      "leiden",
      [](std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges, double gamma,
         std::uint64_t seed) {
        std::vector<Edge> es;
        for (const auto& [a, b, w] : edges) es.push_back({a, b, w});
        const WeightedGraph g = WeightedGraph::from_edges(n, es);
        const ClusterAssignment a = leiden(g, gamma, seed);
        py::dict d;
        d["membership"] = a.membership;
        d["n_clusters"] = a.n_clusters;
        d["quality"] = a.quality;
        return d;
      },
      py::arg("n"), py::arg("edges"), py::arg("gamma") = 1.0, py::arg("seed") = 0);
  m.def(
      "rb_quality",
      [](std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
         const std::vector<int>& membership, double gamma) {
        std::vector<Edge> es;
        for (const auto& [a, b, w] : edges) es.push_back({a, b, w});
        return rb_quality(WeightedGraph::from_edges(n, es), membership, gamma);
      },
      py::arg("n"), py::arg("edges"), py::arg("membership"), py::arg("gamma") = 1.0);

  m.def(
      "effective_config",
      [](const std::string& text, std::optional<std::uint64_t> seed) {
        return config_to_json(parse_pipeline_config(text, seed));
      },
      py::arg("json_text"), py::arg("seed") = py::none());
  m.def(
      "run_stage",
      [](const std::string& stage, const std::filesystem::path& config, const std::filesystem::path& out,
         std::optional<std::uint64_t> seed) {
        const Stage s = parse_stage(stage);
        const PipelineConfig c = load_pipeline_config(config, seed);
        py::gil_scoped_release nogil;
        run_stage(s, c, out);
      },
      py::arg("stage"), py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
}
