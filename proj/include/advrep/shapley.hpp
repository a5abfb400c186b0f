#pragma once

// Model-agnostic attribution primitives. A model is seen as a batch function
// from rows to one scalar output per row. Features outside a coalition are
// replaced by a single reference row (the background mean), so the value of
// coalition S is f(x_S, reference_{not S}).

#include <cstddef>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace advrep {

using BatchFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
using GradientFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct ShapleyRow {
  Eigen::VectorXd phi;
  double base = 0.0;      // f(reference)
  double output = 0.0;    // f(x)
  bool regularized = false;  // KernelSHAP fell back to a ridge solve
};

inline constexpr std::size_t kMaxExactShapleyFeatures = 12;

/// Brute-force Shapley values over all 2^d coalitions (d <= 12).
ShapleyRow exact_shapley(const BatchFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference);

/// KernelSHAP. Coalition sizes are enumerated exhaustively from the outside in
/// (sizes 1 and d-1 first) while the budget allows, and the remaining budget
/// is sampled from the Shapley kernel over the other sizes with paired
/// complements. The empty and full coalitions enter as the equality
/// constraint sum(phi) = f(x) - f(reference). With n_coalitions >= 2^d - 2
/// every coalition is enumerated and the result equals exact_shapley.
ShapleyRow kernel_shap(const BatchFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference,
                       std::size_t n_coalitions, std::mt19937_64& rng);

/// Integrated gradients with the midpoint rule:
/// phi_j = (x_j - b_j) / steps * sum_k grad_j(b + (k - 0.5)/steps (x - b)).
/// `grad` maps a batch of points to per-row gradients.
Eigen::VectorXd integrated_gradients(const GradientFn& grad, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& baseline, std::size_t steps);

/// Violin-plot exaggeration, applied entrywise:
/// T(s) = -sign(s) (exp(alpha log(1 + |s| + eps) / log(base)) - 1).
double violin_transform(double s, double alpha = -2.0, double base = 10.0, double eps = 1e-9);
Eigen::MatrixXd violin_transform(const Eigen::MatrixXd& values, double alpha = -2.0, double base = 10.0,
                                 double eps = 1e-9);

}  // namespace advrep
