#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "advrep/error.hpp"
#include "advrep/graph.hpp"
#include "advrep/manifold.hpp"

namespace advrep {

namespace {

constexpr double kMinScale = 1e-3;
constexpr double kClip = 4.0;
constexpr double kInitExtent = 10.0;

double clip(double g) { return std::clamp(g, -kClip, kClip); }

struct FuzzyEdge {
  std::size_t head;
  std::size_t tail;
  double weight;
};

// Directed memberships exp(-(d - rho)/sigma) merged by fuzzy union.
std::vector<FuzzyEdge> fuzzy_graph(const std::vector<std::vector<Neighbor>>& knn) {
  const std::size_t n = knn.size();
  const std::size_t k = knn.front().size();
  const double target = std::log2(static_cast<double>(k));
  double mean_dist = 0.0;
  for (const auto& row : knn) {
    for (const auto& nb : row) mean_dist += nb.distance;
  }
  mean_dist /= static_cast<double>(n * k);

  std::map<std::pair<std::size_t, std::size_t>, double> directed;
  for (std::size_t i = 0; i < n; ++i) {
    double rho = 0.0;
    for (const auto& nb : knn[i]) {
      if (nb.distance > 0.0) {
        rho = nb.distance;
        break;
      }
    }
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      double psum = 0.0;
      for (const auto& nb : knn[i]) psum += std::exp(-std::max(nb.distance - rho, 0.0) / sigma);
      if (std::abs(psum - target) < 1e-5) break;
      if (psum > target) {
        hi = sigma;
        sigma = 0.5 * (lo + hi);
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? 2.0 * sigma : 0.5 * (lo + hi);
      }
    }
    sigma = std::max(sigma, kMinScale * mean_dist);
    for (const auto& nb : knn[i]) {
      directed[{i, nb.index}] = std::exp(-std::max(nb.distance - rho, 0.0) / std::max(sigma, 1e-300));
    }
  }

  std::vector<FuzzyEdge> out;
  for (const auto& [key, w] : directed) {
    auto rev = directed.find({key.second, key.first});
    const double wt = rev == directed.end() ? 0.0 : rev->second;
    out.push_back({key.first, key.second, w + wt - w * wt});
    if (rev == directed.end()) out.push_back({key.second, key.first, w});
  }
  std::sort(out.begin(), out.end(), [](const FuzzyEdge& a, const FuzzyEdge& b) {
    return a.head < b.head || (a.head == b.head && a.tail < b.tail);
  });
  return out;
}

Eigen::MatrixXd initial_layout(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd init = Eigen::MatrixXd::Zero(n, 2);
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(2, std::min(n, X.cols())));
  const PcaResult p = pca(X, k);
  init.leftCols(static_cast<Eigen::Index>(k)) = p.scores;
  const double extent = init.cwiseAbs().maxCoeff();
  if (extent > 0.0) init *= kInitExtent / extent;
  return init;
}

}  // namespace

std::pair<double, double> fit_ab(double min_dist, double spread) {
  if (!(spread > 0.0) || !(min_dist >= 0.0)) throw ContractError("fit_ab: need spread > 0 and min_dist >= 0");
  constexpr int kPoints = 300;
  std::vector<double> xs(kPoints);
  std::vector<double> ys(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    xs[i] = 3.0 * spread * static_cast<double>(i) / static_cast<double>(kPoints - 1);
    ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
  }
  auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    for (int i = 0; i < kPoints; ++i) {
      const double x = xs[i];
      const double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
      const double f = 1.0 / (1.0 + a * p);
      r(i) = f - ys[i];
      if (J) {
        (*J)(i, 0) = -p * f * f;
        (*J)(i, 1) = x > 0.0 ? -a * p * 2.0 * std::log(x) * f * f : 0.0;
      }
    }
    return r.squaredNorm();
  };
  double a = 1.0;
  double b = 1.0;
  double mu = 1e-3;
  Eigen::VectorXd r(kPoints);
  Eigen::MatrixXd J(kPoints, 2);
  double cost = residuals(a, b, r, &J);
  for (int it = 0; it < 500; ++it) {
    const Eigen::Matrix2d H = J.transpose() * J;
    const Eigen::Vector2d g = J.transpose() * r;
    Eigen::Matrix2d damped = H;
    damped.diagonal() += mu * H.diagonal();
    const Eigen::Vector2d step = damped.ldlt().solve(-g);
    Eigen::VectorXd r_new(kPoints);
    const double a_new = a + step(0);
    const double b_new = b + step(1);
    const double cost_new = b_new > 0.0 ? residuals(a_new, b_new, r_new, nullptr) : cost + 1.0;
    if (cost_new < cost) {
      a = a_new;
      b = b_new;
      mu = std::max(mu * 0.3, 1e-12);
      const bool converged = cost - cost_new < 1e-15 * std::max(cost, 1e-300);
      cost = residuals(a, b, r, &J);
      if (converged || step.norm() < 1e-12) break;
    } else {
      mu *= 10.0;
      if (mu > 1e12) break;
    }
  }
  return {a, b};
}

Embedding2D embed_2d(const Eigen::MatrixXd& X, const UmapConfig& config, std::string source) {
  if (config.n_neighbors < 2) throw ContractError("embed_2d: n_neighbors must be at least 2");
  const auto n = static_cast<std::size_t>(X.rows());
  if (n <= config.n_neighbors) {
    throw ContractError("embed_2d: need more samples (" + std::to_string(n) + ") than n_neighbors (" +
                        std::to_string(config.n_neighbors) + ")");
  }
  if (config.epochs < 1) throw ContractError("embed_2d: epochs must be at least 1");
  const auto [a, b] = fit_ab(config.min_dist, config.spread);

  const std::vector<FuzzyEdge> all_edges = fuzzy_graph(nearest_neighbors(X, config.n_neighbors));
  double max_w = 0.0;
  for (const auto& e : all_edges) max_w = std::max(max_w, e.weight);
  const auto epochs = static_cast<double>(config.epochs);
  std::vector<FuzzyEdge> edges;
  for (const auto& e : all_edges) {
    if (e.weight >= max_w / epochs) edges.push_back(e);
  }
  std::vector<double> per_sample(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) per_sample[e] = max_w / edges[e].weight;
  std::vector<double> next_sample = per_sample;
  std::vector<double> per_negative(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    per_negative[e] = per_sample[e] / static_cast<double>(std::max<std::size_t>(config.negative_rate, 1));
  }
  std::vector<double> next_negative = per_negative;

  Eigen::MatrixXd Y = initial_layout(X).transpose();  // 2×n, one column per point
  std::mt19937_64 rng(config.seed);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double alpha = config.learning_rate * (1.0 - static_cast<double>(epoch) / epochs);
    const auto now = static_cast<double>(epoch);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (next_sample[e] > now) continue;
      const std::size_t i = edges[e].head;
      const std::size_t j = edges[e].tail;
      Eigen::Vector2d diff = Y.col(static_cast<Eigen::Index>(i)) - Y.col(static_cast<Eigen::Index>(j));
      double d2 = diff.squaredNorm();
      if (d2 > 0.0) {
        const double coef = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
        for (Eigen::Index c = 0; c < 2; ++c) {
          const double g = clip(coef * diff(c)) * alpha;
          Y(c, static_cast<Eigen::Index>(i)) += g;
          Y(c, static_cast<Eigen::Index>(j)) -= g;
        }
      }
      next_sample[e] += per_sample[e];

      if (config.negative_rate > 0) {
        const auto n_neg = static_cast<std::size_t>(std::max(0.0, (now - next_negative[e]) / per_negative[e]));
        for (std::size_t p = 0; p < n_neg; ++p) {
          const std::size_t k = static_cast<std::size_t>(rng() % n);
          if (k == i) continue;
          diff = Y.col(static_cast<Eigen::Index>(i)) - Y.col(static_cast<Eigen::Index>(k));
          d2 = diff.squaredNorm();
          const double coef = d2 > 0.0 ? 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0)) : 0.0;
          for (Eigen::Index c = 0; c < 2; ++c) {
            const double g = coef > 0.0 ? clip(coef * diff(c)) : kClip;
            Y(c, static_cast<Eigen::Index>(i)) += g * alpha;
          }
        }
        next_negative[e] += static_cast<double>(n_neg) * per_negative[e];
      }
    }
  }

  Embedding2D out;
  out.coords = Y.transpose();
  out.source = std::move(source);
  out.params = config;
  if (!out.coords.allFinite()) throw NumericalError("embed_2d: layout diverged");
  return out;
}

}  // namespace advrep
