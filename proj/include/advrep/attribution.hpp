#pragma once

// Per-sample attribution matrices built on the primitives in shapley.hpp:
// layer-aware SHAP on a surrogate classifier over hidden activations, and
// vanilla SHAP / integrated gradients on the network's label output.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "advrep/dann.hpp"
#include "advrep/shapley.hpp"
#include "advrep/surrogate.hpp"

namespace advrep {

struct BackgroundSet {
  Eigen::MatrixXd rows;              // m×d
  std::vector<std::size_t> indices;  // source rows, in selection order
  std::string policy;

  /// Masking reference: column means of `rows`.
  Eigen::VectorXd mean() const;
};

/// Label-balanced background: alternates between label classes (shuffled
/// within class by `seed`) drawing from `pool` until `m` rows are taken or
/// the pool is exhausted.
BackgroundSet select_background(const Eigen::MatrixXd& X, std::span<const int> labels,
                                std::span<const std::size_t> pool, std::size_t m, std::uint64_t seed);

struct AttributionMatrix {
  Eigen::MatrixXd values;  // n×d
  // f(background mean): the reference every row's attributions sum away from
  double base_value = 0.0;
  // mean of f over the background rows themselves
  double background_output_mean = 0.0;
  std::string method;  // "kernel_shap" | "integrated_gradients" | "exact_shapley"
  std::string target;
  std::vector<std::string> feature_names;
  std::vector<std::string> sample_ids;
  std::string background_policy;
  std::uint64_t seed = 0;
  std::size_t budget = 0;  // coalitions or IG steps
  std::size_t regularized_rows = 0;
};

/// KernelSHAP of `f` for every row of X against the background mean. Row i
/// draws its coalitions from derive_seed(seed, i), so the result does not
/// depend on the worker count. With d <= 12 and n_coalitions >= 2^d the rows
/// are exact Shapley values.
AttributionMatrix explain_rows(const BatchFn& f, const Eigen::MatrixXd& X, const BackgroundSet& background,
                               std::size_t n_coalitions, std::uint64_t seed);

/// Layer-aware SHAP: explains the surrogate's log-odds for class slot `cls`.
AttributionMatrix surrogate_attributions(const SurrogateModel& model, const Eigen::MatrixXd& activations,
                                         const BackgroundSet& background, std::size_t n_coalitions,
                                         std::uint64_t seed, std::size_t cls = 1);

enum class VanillaMethod { kernel_shap, integrated_gradients };

/// Explains the network's label probability w.r.t. raw inputs. KernelSHAP
/// masks with the background mean; integrated gradients integrate from the
/// zero vector. `budget` is the coalition count or the number of IG steps.
AttributionMatrix vanilla_explain(const ModelParams& params, const Eigen::MatrixXd& X,
                                  const BackgroundSet& background, VanillaMethod method, std::size_t budget,
                                  std::uint64_t seed);

/// Mean |phi| per feature.
Eigen::VectorXd mean_abs_attribution(const Eigen::MatrixXd& values);

/// Indices of the k largest entries, ties broken toward the lower index.
std::vector<std::size_t> top_k(const Eigen::VectorXd& scores, std::size_t k);

void write_attribution(const AttributionMatrix& a, const std::filesystem::path& csv_path,
                       const std::filesystem::path& meta_path);
AttributionMatrix read_attribution(const std::filesystem::path& csv_path, const std::filesystem::path& meta_path);

}  // namespace advrep
