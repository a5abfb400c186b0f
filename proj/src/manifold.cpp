#include "advrep/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advrep/error.hpp"

namespace advrep {

namespace {

// Labels remapped to 0..C-1 in ascending order of the original values.
std::vector<std::size_t> compact_labels(std::span<const int> labels, std::size_t& n_clusters) {
  std::vector<int> uniq(labels.begin(), labels.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  n_clusters = uniq.size();
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), labels[i]) - uniq.begin());
  }
  return out;
}

void check_rows(const Eigen::MatrixXd& X, std::span<const int> labels, const char* who) {
  if (static_cast<Eigen::Index>(labels.size()) != X.rows()) {
    throw DimensionError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(X.rows()) + " rows");
  }
}

double row_distance(const Eigen::MatrixXd& X, Eigen::Index i, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double diff = X(i, c) - X(j, c);
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

PcaResult pca(const Eigen::MatrixXd& X, std::size_t k) {
  const auto limit = static_cast<std::size_t>(std::min(X.rows(), X.cols()));
  if (k < 1 || k > limit) {
    throw ContractError("pca: k=" + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
  }
  if (X.rows() < 2) throw ContractError("pca: need at least 2 rows");
  PcaResult out;
  out.mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - out.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  out.components = svd.matrixV().leftCols(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::Index arg = 0;
    out.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.components(arg, c) < 0.0) out.components.col(c) *= -1.0;
  }
  out.scores = centered * out.components;
  const Eigen::VectorXd sv = svd.singularValues().head(kk);
  out.explained_variance = sv.cwiseProduct(sv) / static_cast<double>(X.rows() - 1);
  return out;
}

double silhouette(const Eigen::MatrixXd& X, std::span<const int> labels) {
  check_rows(X, labels, "silhouette");
  std::size_t C = 0;
  const std::vector<std::size_t> id = compact_labels(labels, C);
  if (C < 2) throw ContractError("silhouette: need at least 2 clusters, got " + std::to_string(C));
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<std::size_t> size(C, 0);
  for (std::size_t c : id) ++size[c];

  double total = 0.0;
  std::vector<double> sum(C);
  for (std::size_t i = 0; i < n; ++i) {
    if (size[id[i]] == 1) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[id[j]] += row_distance(X, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const double a = sum[id[i]] / static_cast<double>(size[id[i]] - 1);
    double b = 0.0;
    bool have_b = false;
    for (std::size_t c = 0; c < C; ++c) {
      if (c == id[i]) continue;
      const double mean = sum[c] / static_cast<double>(size[c]);
      if (!have_b || mean < b) {
        b = mean;
        have_b = true;
      }
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double calinski_harabasz(const Eigen::MatrixXd& X, std::span<const int> labels) {
  check_rows(X, labels, "calinski_harabasz");
  std::size_t C = 0;
  const std::vector<std::size_t> id = compact_labels(labels, C);
  const auto n = static_cast<std::size_t>(X.rows());
  if (C < 2 || C >= n) {
    throw ContractError("calinski_harabasz: need 2 <= clusters < samples, got " + std::to_string(C) +
                        " clusters for " + std::to_string(n) + " samples");
  }
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C), d);
  Eigen::RowVectorXd overall = Eigen::RowVectorXd::Zero(d);
  std::vector<std::size_t> size(C, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      centroid(static_cast<Eigen::Index>(id[i]), c) += X(static_cast<Eigen::Index>(i), c);
      overall(c) += X(static_cast<Eigen::Index>(i), c);
    }
    ++size[id[i]];
  }
  for (std::size_t k = 0; k < C; ++k) {
    for (Eigen::Index c = 0; c < d; ++c) centroid(static_cast<Eigen::Index>(k), c) /= static_cast<double>(size[k]);
  }
  for (Eigen::Index c = 0; c < d; ++c) overall(c) /= static_cast<double>(n);

  double between = 0.0;
  for (std::size_t k = 0; k < C; ++k) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double diff = centroid(static_cast<Eigen::Index>(k), c) - overall(c);
      s += diff * diff;
    }
    between += static_cast<double>(size[k]) * s;
  }
  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double diff = X(static_cast<Eigen::Index>(i), c) - centroid(static_cast<Eigen::Index>(id[i]), c);
      within += diff * diff;
    }
  }
  if (within == 0.0) return between > 0.0 ? kCalinskiHarabaszCap : 0.0;
  const double score = (between / static_cast<double>(C - 1)) / (within / static_cast<double>(n - C));
  return std::min(score, kCalinskiHarabaszCap);
}

std::vector<double> minmax_normalize(std::span<const double> series) {
  if (series.empty()) throw ContractError("minmax_normalize: empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = range > 0.0 ? (series[i] - min) / range : 0.5;
  return out;
}

std::vector<double> lowess(std::span<const double> x, std::span<const double> y, double frac) {
  if (x.size() != y.size()) throw DimensionError("lowess: x and y lengths differ");
  if (!(frac > 0.0 && frac <= 1.0)) throw ContractError("lowess: frac must lie in (0, 1]");
  const std::size_t n = x.size();
  if (n < 3) throw ContractError("lowess: need at least 3 points");
  const std::size_t r =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-12)), 2, n);

  std::vector<double> out(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](std::size_t a, std::size_t b) {
      const double da = std::abs(x[a] - x[i]);
      const double db = std::abs(x[b] - x[i]);
      return da < db || (da == db && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(r - 1), order.end(), closer);
    const double h = std::abs(x[order[r - 1]] - x[i]);

    double sw = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> w(r);
    for (std::size_t t = 0; t < r; ++t) {
      const std::size_t j = order[t];
      const double u = h > 0.0 ? std::abs(x[j] - x[i]) / h : 0.0;
      const double c = u < 1.0 ? 1.0 - u * u * u : 0.0;
      w[t] = c * c * c;
      sw += w[t];
      sx += w[t] * (x[j] - x[i]);
      sy += w[t] * y[j];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t t = 0; t < r; ++t) {
      const std::size_t j = order[t];
      const double dx = x[j] - x[i] - mx;
      sxx += w[t] * dx * dx;
      sxy += w[t] * dx * (y[j] - my);
    }
    // evaluated at x_i, which sits at -mx in the centered frame
    const double scale = std::max(sxx, 0.0);
    out[i] = scale > 1e-12 * std::max(sw * h * h, 1e-300) ? my + (sxy / sxx) * (-mx) : my;
  }
  return out;
}

}  // namespace advrep
