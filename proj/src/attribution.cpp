#include "advrep/attribution.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "advrep/csv.hpp"
#include "advrep/error.hpp"
#include "advrep/parallel.hpp"
#include "advrep/rng.hpp"

namespace advrep {

namespace {

constexpr const char* kMetaFormat = "advrep-attribution";

std::vector<std::string> default_names(const char* prefix, Eigen::Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

void check_background(const BackgroundSet& background, Eigen::Index d) {
  if (background.rows.rows() < 1) throw ContractError("attribution: background set is empty");
  if (background.rows.cols() != d) {
    throw DimensionError("attribution: background has " + std::to_string(background.rows.cols()) +
                         " columns, data has " + std::to_string(d));
  }
}

}  // namespace

Eigen::VectorXd BackgroundSet::mean() const { return rows.colwise().mean().transpose(); }

BackgroundSet select_background(const Eigen::MatrixXd& X, std::span<const int> labels,
                                std::span<const std::size_t> pool, std::size_t m, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows()) {
    throw DimensionError("select_background: label count differs from row count");
  }
  if (m == 0 || pool.empty()) throw ContractError("select_background: need m >= 1 and a non-empty pool");
  std::vector<int> classes;
  for (std::size_t i : pool) classes.push_back(labels[i]);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::mt19937_64 rng(derive_seed(seed, 0xb6));
  std::vector<std::vector<std::size_t>> by_class(classes.size());
  for (std::size_t i : pool) {
    const auto c = std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin();
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  BackgroundSet out;
  out.policy = "label_balanced";
  std::vector<std::size_t> cursor(by_class.size(), 0);
  while (out.indices.size() < m) {
    bool took = false;
    for (std::size_t c = 0; c < by_class.size() && out.indices.size() < m; ++c) {
      if (cursor[c] < by_class[c].size()) {
        out.indices.push_back(by_class[c][cursor[c]++]);
        took = true;
      }
    }
    if (!took) break;
  }
  out.rows.resize(static_cast<Eigen::Index>(out.indices.size()), X.cols());
  for (std::size_t r = 0; r < out.indices.size(); ++r) {
    out.rows.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(out.indices[r]));
  }
  return out;
}

AttributionMatrix explain_rows(const BatchFn& f, const Eigen::MatrixXd& X, const BackgroundSet& background,
                               std::size_t n_coalitions, std::uint64_t seed) {
  check_background(background, X.cols());
  const Eigen::VectorXd reference = background.mean();
  const auto n = static_cast<std::size_t>(X.rows());
  AttributionMatrix out;
  out.values.resize(X.rows(), X.cols());
  out.method = "kernel_shap";
  out.seed = seed;
  out.budget = n_coalitions;
  out.background_policy = background.policy;
  out.feature_names = default_names("f", X.cols());
  out.sample_ids = default_names("r", X.rows());

  std::vector<char> regularized(n, 0);
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(i)).transpose();
    const ShapleyRow row = kernel_shap(f, x, reference, n_coalitions, rng);
    out.values.row(static_cast<Eigen::Index>(i)) = row.phi.transpose();
    regularized[i] = row.regularized ? 1 : 0;
  });
  out.regularized_rows = static_cast<std::size_t>(std::count(regularized.begin(), regularized.end(), 1));

  Eigen::MatrixXd ref(1, X.cols());
  ref.row(0) = reference.transpose();
  out.base_value = f(ref)(0);
  out.background_output_mean = f(background.rows).mean();
  return out;
}

AttributionMatrix surrogate_attributions(const SurrogateModel& model, const Eigen::MatrixXd& activations,
                                         const BackgroundSet& background, std::size_t n_coalitions,
                                         std::uint64_t seed, std::size_t cls) {
  if (static_cast<std::size_t>(activations.cols()) != model.n_features) {
    throw DimensionError("surrogate_attributions: activations have " + std::to_string(activations.cols()) +
                         " columns, surrogate expects " + std::to_string(model.n_features));
  }
  const BatchFn f = [&model, cls](const Eigen::MatrixXd& rows) { return model.margin(rows, cls); };
  AttributionMatrix out = explain_rows(f, activations, background, n_coalitions, seed);
  out.target = "surrogate_log_odds[class=" + std::to_string(model.classes.at(cls)) + "]";
  return out;
}

AttributionMatrix vanilla_explain(const ModelParams& params, const Eigen::MatrixXd& X,
                                  const BackgroundSet& background, VanillaMethod method, std::size_t budget,
                                  std::uint64_t seed) {
  if (static_cast<std::size_t>(X.cols()) != params.config.input_dim) {
    throw DimensionError("vanilla_explain: data has " + std::to_string(X.cols()) + " columns, model expects " +
                         std::to_string(params.config.input_dim));
  }
  const BatchFn f = [&params](const Eigen::MatrixXd& rows) { return predict_label(params, rows); };
  if (method == VanillaMethod::kernel_shap) {
    AttributionMatrix out = explain_rows(f, X, background, budget, seed);
    out.target = "label_prob";
    return out;
  }

  check_background(background, X.cols());
  AttributionMatrix out;
  out.values.resize(X.rows(), X.cols());
  out.method = "integrated_gradients";
  out.target = "label_prob";
  out.seed = seed;
  out.budget = budget;
  out.background_policy = "zero_baseline";
  out.feature_names = default_names("f", X.cols());
  out.sample_ids = default_names("r", X.rows());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(X.cols());
  const GradientFn grad = [&params](const Eigen::MatrixXd& rows) { return label_input_gradient(params, rows); };
  parallel_for(static_cast<std::size_t>(X.rows()), [&](std::size_t i) {
    const Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(i)).transpose();
    out.values.row(static_cast<Eigen::Index>(i)) = integrated_gradients(grad, x, zero, budget).transpose();
  });
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, X.cols());
  out.base_value = f(z)(0);
  out.background_output_mean = f(background.rows).mean();
  return out;
}

Eigen::VectorXd mean_abs_attribution(const Eigen::MatrixXd& values) {
  return values.cwiseAbs().colwise().mean().transpose();
}

std::vector<std::size_t> top_k(const Eigen::VectorXd& scores, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&scores](std::size_t a, std::size_t b) {
                      const double sa = scores(static_cast<Eigen::Index>(a));
                      const double sb = scores(static_cast<Eigen::Index>(b));
                      return sa > sb || (sa == sb && a < b);
                    });
  idx.resize(k);
  return idx;
}

void write_attribution(const AttributionMatrix& a, const std::filesystem::path& csv_path,
                       const std::filesystem::path& meta_path) {
  csv::write_matrix(csv_path, a.sample_ids, a.feature_names, a.values);
  nlohmann::ordered_json meta = {
      {"format", kMetaFormat},
      {"version", 1},
      {"method", a.method},
      {"target", a.target},
      {"base_value", a.base_value},
      {"background_output_mean", a.background_output_mean},
      {"background_policy", a.background_policy},
      {"seed", a.seed},
      {"budget", a.budget},
      {"regularized_rows", a.regularized_rows},
      {"rows", a.values.rows()},
      {"cols", a.values.cols()},
  };
  std::ofstream out(meta_path, std::ios::binary);
  if (!out) throw Error("cannot write " + meta_path.string());
  out << meta.dump(2) << '\n';
}

AttributionMatrix read_attribution(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path) {
  std::ifstream in(meta_path);
  if (!in) throw MissingArtifactError("missing attribution metadata " + meta_path.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != kMetaFormat) throw ParseError(meta_path.string() + ": not an attribution file");
  csv::LabeledMatrix m = csv::read_matrix(csv_path);
  AttributionMatrix a;
  a.values = std::move(m.values);
  a.sample_ids = std::move(m.row_ids);
  a.feature_names = std::move(m.col_names);
  a.method = meta.at("method").get<std::string>();
  a.target = meta.at("target").get<std::string>();
  a.base_value = meta.at("base_value").get<double>();
  a.background_output_mean = meta.at("background_output_mean").get<double>();
  a.background_policy = meta.at("background_policy").get<std::string>();
  a.seed = meta.at("seed").get<std::uint64_t>();
  a.budget = meta.at("budget").get<std::size_t>();
  a.regularized_rows = meta.at("regularized_rows").get<std::size_t>();
  return a;
}

}  // namespace advrep
