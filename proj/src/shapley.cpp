#include "advrep/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <vector>

#include "advrep/error.hpp"

namespace advrep {

namespace {

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

// Shapley kernel weight of one coalition of size s among d players.
double kernel_weight(std::size_t d, std::size_t s) {
  return static_cast<double>(d - 1) / (binomial(d, s) * static_cast<double>(s) * static_cast<double>(d - s));
}

Eigen::RowVectorXd masked_row(const Eigen::VectorXd& x, const Eigen::VectorXd& reference,
                              const std::vector<char>& in) {
  Eigen::RowVectorXd row = reference.transpose();
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (in[j]) row(static_cast<Eigen::Index>(j)) = x(static_cast<Eigen::Index>(j));
  }
  return row;
}

struct CoalitionSet {
  std::vector<std::vector<char>> members;
  std::vector<double> weights;

  void add(std::vector<char> m, double w) {
    members.push_back(std::move(m));
    weights.push_back(w);
  }
};

// Every subset of size s, in lexicographic order of member indices.
void enumerate_size(std::size_t d, std::size_t s, double weight, CoalitionSet& out) {
  std::vector<std::size_t> idx(s);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    std::vector<char> m(d, 0);
    for (std::size_t i : idx) m[i] = 1;
    out.add(std::move(m), weight);
    std::size_t pos = s;
    while (pos > 0 && idx[pos - 1] == d - s + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t i = pos; i < s; ++i) idx[i] = idx[i - 1] + 1;
  }
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

CoalitionSet build_coalitions(std::size_t d, std::size_t budget, std::mt19937_64& rng) {
  CoalitionSet set;
  const bool small = d <= 30;
  if (small && static_cast<double>(budget) >= std::ldexp(1.0, static_cast<int>(d)) - 2.0) {
    for (std::size_t s = 1; s < d; ++s) enumerate_size(d, s, kernel_weight(d, s), set);
    return set;
  }

  std::vector<double> mass(d, 0.0);
  for (std::size_t s = 1; s < d; ++s) mass[s] = static_cast<double>(d - 1) / static_cast<double>(s * (d - s));

  std::size_t lo = 1;
  std::size_t hi = d - 1;
  double remaining_mass = 0.0;
  for (std::size_t s = 1; s < d; ++s) remaining_mass += mass[s];
  while (lo <= hi) {
    const double count = lo == hi ? binomial(d, lo) : 2.0 * binomial(d, lo);
    if (count > static_cast<double>(budget)) break;
    enumerate_size(d, lo, kernel_weight(d, lo), set);
    remaining_mass -= mass[lo];
    if (lo != hi) {
      enumerate_size(d, hi, kernel_weight(d, hi), set);
      remaining_mass -= mass[hi];
    }
    budget -= static_cast<std::size_t>(count);
    ++lo;
    --hi;
  }
  if (lo > hi || budget < 2) return set;

  // sample the middle sizes from the kernel, each draw paired with its complement
  std::vector<double> cdf;
  double acc = 0.0;
  for (std::size_t s = lo; s <= hi; ++s) {
    acc += mass[s];
    cdf.push_back(acc);
  }
  const std::size_t pairs = budget / 2;
  const double w = remaining_mass / static_cast<double>(2 * pairs);
  std::vector<std::size_t> perm(d);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double u = uniform01(rng) * acc;
    std::size_t k = 0;
    while (k + 1 < cdf.size() && cdf[k] < u) ++k;
    const std::size_t s = lo + k;
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < s; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(d - i));
      std::swap(perm[i], perm[std::min(j, d - 1)]);
    }
    std::vector<char> m(d, 0);
    for (std::size_t i = 0; i < s; ++i) m[perm[i]] = 1;
    std::vector<char> comp(d);
    for (std::size_t i = 0; i < d; ++i) comp[i] = m[i] ? 0 : 1;
    set.add(std::move(m), w);
    set.add(std::move(comp), w);
  }
  return set;
}

}  // namespace

ShapleyRow exact_shapley(const BatchFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference) {
  const auto d = static_cast<std::size_t>(x.size());
  if (d == 0) throw ContractError("exact_shapley: empty feature vector");
  if (d > kMaxExactShapleyFeatures) {
    throw ContractError("exact_shapley: d=" + std::to_string(d) + " exceeds the enumeration limit of " +
                        std::to_string(kMaxExactShapleyFeatures));
  }
  if (reference.size() != x.size()) throw DimensionError("exact_shapley: reference length differs from x");
  const std::size_t n_masks = std::size_t{1} << d;
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n_masks), static_cast<Eigen::Index>(d));
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      rows(static_cast<Eigen::Index>(mask), jj) = (mask >> j) & 1U ? x(jj) : reference(jj);
    }
  }
  const Eigen::VectorXd v = f(rows);

  // w(s) = s!(d-s-1)!/d!
  std::vector<double> w(d);
  for (std::size_t s = 0; s < d; ++s) {
    w[s] = 1.0 / (static_cast<double>(d) * binomial(d - 1, s));
  }
  ShapleyRow out;
  out.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    double acc = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      acc += w[s] * (v(static_cast<Eigen::Index>(mask | bit)) - v(static_cast<Eigen::Index>(mask)));
    }
    out.phi(static_cast<Eigen::Index>(j)) = acc;
  }
  out.base = v(0);
  out.output = v(static_cast<Eigen::Index>(n_masks - 1));
  return out;
}

ShapleyRow kernel_shap(const BatchFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& reference,
                       std::size_t n_coalitions, std::mt19937_64& rng) {
  const auto d = static_cast<std::size_t>(x.size());
  if (d == 0) throw ContractError("kernel_shap: empty feature vector");
  if (reference.size() != x.size()) throw DimensionError("kernel_shap: reference length differs from x");
  if (n_coalitions < d + 2) {
    throw ContractError("kernel_shap: n_coalitions=" + std::to_string(n_coalitions) + " is below d+2=" +
                        std::to_string(d + 2));
  }
  ShapleyRow out;
  if (d == 1) {
    Eigen::MatrixXd rows(2, 1);
    rows << x(0), reference(0);
    const Eigen::VectorXd v = f(rows);
    out.output = v(0);
    out.base = v(1);
    out.phi = Eigen::VectorXd::Constant(1, out.output - out.base);
    return out;
  }

  const CoalitionSet coalitions = build_coalitions(d, n_coalitions - 2, rng);
  const auto n = static_cast<Eigen::Index>(coalitions.members.size());
  Eigen::MatrixXd rows(n + 2, static_cast<Eigen::Index>(d));
  rows.row(0) = x.transpose();
  rows.row(1) = reference.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    rows.row(i + 2) = masked_row(x, reference, coalitions.members[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd v = f(rows);
  out.output = v(0);
  out.base = v(1);
  const double delta = out.output - out.base;

  // eliminate the last coefficient with the efficiency constraint
  const auto m = static_cast<Eigen::Index>(d - 1);
  Eigen::MatrixXd Z(n, m);
  Eigen::VectorXd target(n);
  Eigen::VectorXd sqrt_w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mem = coalitions.members[static_cast<std::size_t>(i)];
    const double last = mem[d - 1] ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < m; ++j) Z(i, j) = (mem[static_cast<std::size_t>(j)] ? 1.0 : 0.0) - last;
    target(i) = v(i + 2) - out.base - last * delta;
    sqrt_w(i) = std::sqrt(coalitions.weights[static_cast<std::size_t>(i)]);
  }
  const Eigen::MatrixXd Zw = sqrt_w.asDiagonal() * Z;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  A.selfadjointView<Eigen::Lower>().rankUpdate(Zw.transpose());
  A = A.selfadjointView<Eigen::Lower>();
  const Eigen::VectorXd b = Zw.transpose() * (sqrt_w.asDiagonal() * target);

  Eigen::VectorXd head;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const Eigen::VectorXd diag = ldlt.vectorD();
  const double scale = std::max(A.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const bool singular = ldlt.info() != Eigen::Success || diag.minCoeff() <= 1e-12 * scale;
  if (singular) {
    A.diagonal().array() += 1e-8;
    head = A.ldlt().solve(b);
    out.regularized = true;
  } else {
    head = ldlt.solve(b);
  }
  out.phi.resize(static_cast<Eigen::Index>(d));
  out.phi.head(m) = head;
  out.phi(m) = delta - head.sum();
  return out;
}

Eigen::VectorXd integrated_gradients(const GradientFn& grad, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& baseline, std::size_t steps) {
  if (steps < 1) throw ContractError("integrated_gradients: steps must be at least 1");
  if (baseline.size() != x.size()) throw DimensionError("integrated_gradients: baseline length differs from x");
  const Eigen::VectorXd diff = x - baseline;
  Eigen::MatrixXd points(static_cast<Eigen::Index>(steps), x.size());
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    points.row(static_cast<Eigen::Index>(k)) = (baseline + alpha * diff).transpose();
  }
  const Eigen::MatrixXd g = grad(points);
  if (g.rows() != points.rows() || g.cols() != points.cols()) {
    throw DimensionError("integrated_gradients: gradient function returned wrong shape");
  }
  const Eigen::VectorXd mean_grad = g.colwise().mean().transpose();
  return diff.cwiseProduct(mean_grad);
}

double violin_transform(double s, double alpha, double base, double eps) {
  if (!(base > 1.0)) throw ContractError("violin_transform: base must exceed 1");
  if (!(eps > 0.0)) throw ContractError("violin_transform: eps must be positive");
  const double sign = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
  return -1.0 * sign * (std::exp(alpha * std::log(1.0 + std::abs(s) + eps) / std::log(base)) - 1.0);
}

Eigen::MatrixXd violin_transform(const Eigen::MatrixXd& values, double alpha, double base, double eps) {
  return values.unaryExpr([=](double s) { return violin_transform(s, alpha, base, eps); });
}

}  // namespace advrep
