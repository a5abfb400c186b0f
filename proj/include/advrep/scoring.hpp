#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace advrep {

/// One 2-D manifold to score: the embedding of some matrix at one epoch.
struct ManifoldInput {
  std::size_t epoch = 0;
  std::string layer;
  std::string source;  // "activation" or "shap"
  Eigen::MatrixXd coords;
};

struct ScoreRow {
  std::size_t epoch = 0;
  std::string layer;
  std::string source;
  std::string label_kind;  // "label" or "domain"
  std::string metric;      // "silhouette" or "calinski_harabasz"
  double raw = 0.0;
  double normalized = 0.0;
  double smoothed = 0.0;
};

/// Silhouette and Calinski-Harabasz of every manifold under both labelings,
/// then per curve (layer, source, labeling, metric) over epochs: min-max
/// normalization and LOWESS of the normalized values against the epoch.
/// Curves with fewer than 3 epochs are left unsmoothed. Rows are ordered by
/// layer, source, labeling, metric, then epoch.
std::vector<ScoreRow> score_series(const std::vector<ManifoldInput>& manifolds, std::span<const int> labels,
                                   std::span<const int> domains, double frac = 0.3);

/// First epoch whose value reaches `fraction` of the curve's final value
/// (curve ordered by epoch). Returns the last epoch when none does earlier.
std::size_t convergence_epoch(std::span<const std::size_t> epochs, std::span<const double> values,
                              double fraction = 0.8);

struct ClassScore {
  int cls = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // true members
};

/// Per-class precision, recall and F1 for each id in `classes`; 0/0 counts as 0.
std::vector<ClassScore> classification_report(std::span<const int> truth, std::span<const int> predicted,
                                              std::span<const int> classes);
double macro_f1(const std::vector<ClassScore>& report);

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path);

}  // namespace advrep
