#pragma once

// Dimensionality reduction, 2-D neighbor embeddings, cluster-quality scores
// and LOWESS smoothing.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace advrep {

struct PcaResult {
  Eigen::MatrixXd scores;               // n×k
  Eigen::MatrixXd components;           // d×k, orthonormal columns
  Eigen::VectorXd explained_variance;   // k, non-increasing (divisor n-1)
  Eigen::RowVectorXd mean;              // 1×d column means
};

/// Column-centered thin SVD. Each component's sign is fixed so that its
/// largest-magnitude loading is positive.
PcaResult pca(const Eigen::MatrixXd& X, std::size_t k);

struct UmapConfig {
  std::size_t n_neighbors = 30;
  double min_dist = 0.3;
  double spread = 1.0;
  std::size_t epochs = 200;
  std::size_t negative_rate = 5;
  double learning_rate = 1.0;
  std::uint64_t seed = 0;
};

struct Embedding2D {
  Eigen::MatrixXd coords;  // n×2
  std::string source;
  UmapConfig params;
};

/// (a, b) of the low-dimensional similarity 1/(1 + a d^(2b)) fitted by
/// least squares to the min_dist/spread target curve.
std::pair<double, double> fit_ab(double min_dist, double spread);

/// Simplified UMAP: exact kNN, per-point adaptive kernel (rho = nearest
/// distance, sigma by bisection so the memberships sum to log2(k)), fuzzy
/// union, PCA-2 initialization scaled to [-10, 10], then epoch-sampled
/// attraction with `negative_rate` negative samples per positive.
Embedding2D embed_2d(const Eigen::MatrixXd& X, const UmapConfig& config, std::string source = {});

/// Mean silhouette over samples; members of singleton clusters score 0.
/// Raises ContractError when fewer than 2 distinct labels are present.
double silhouette(const Eigen::MatrixXd& X, std::span<const int> labels);

/// Returned when the within-cluster scatter is zero but clusters are separated.
inline constexpr double kCalinskiHarabaszCap = 1e12;

/// [tr(B)/(C-1)] / [tr(W)/(n-C)]; requires 2 <= C < n.
double calinski_harabasz(const Eigen::MatrixXd& X, std::span<const int> labels);

/// (v - min)/(max - min); a constant series maps to 0.5 everywhere.
std::vector<double> minmax_normalize(std::span<const double> series);

/// Local linear regression at every x_i over the ceil(frac·n) nearest points
/// with tricube weights scaled by the farthest of them. No robustness steps.
std::vector<double> lowess(std::span<const double> x, std::span<const double> y, double frac);

}  // namespace advrep
