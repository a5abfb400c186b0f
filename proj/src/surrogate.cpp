#include "advrep/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advrep/error.hpp"
#include "advrep/rng.hpp"

namespace advrep {

namespace {

constexpr double kMinGain = 1e-12;
constexpr double kMinHessian = 1e-12;

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

using SortedColumns = std::vector<std::vector<std::uint32_t>>;

SortedColumns presort(const Eigen::MatrixXd& X) {
  SortedColumns order(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    auto& idx = order[static_cast<std::size_t>(f)];
    idx.resize(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), 0U);
    std::stable_sort(idx.begin(), idx.end(), [&X, f](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
  }
  return order;
}

struct Candidate {
  double gain = kMinGain;
  int feature = -1;
  double threshold = 0.0;
};

// Level-wise exact growth: one scan over each presorted column per level.
RegressionTree grow_tree(const Eigen::MatrixXd& X, const SortedColumns& order, const Eigen::VectorXd& residual,
                         const Eigen::VectorXd& hessian, const std::vector<char>& active, const GbtConfig& config) {
  const auto n = static_cast<std::size_t>(X.rows());
  RegressionTree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) node_of[i] = 0;
  }
  std::vector<int> frontier = {0};

  for (std::size_t depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
    const std::size_t slots = frontier.size();
    std::vector<double> total(slots, 0.0);
    std::vector<std::size_t> count(slots, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (node_of[i] < 0) continue;
      const int s = slot_of[static_cast<std::size_t>(node_of[i])];
      if (s < 0) continue;
      total[static_cast<std::size_t>(s)] += residual(static_cast<Eigen::Index>(i));
      ++count[static_cast<std::size_t>(s)];
    }

    std::vector<Candidate> best(slots);
    std::vector<double> left_sum(slots);
    std::vector<std::size_t> left_count(slots);
    std::vector<double> last(slots);
    std::vector<char> has_last(slots);
    for (std::size_t f = 0; f < order.size(); ++f) {
      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      std::fill(left_count.begin(), left_count.end(), 0);
      std::fill(has_last.begin(), has_last.end(), 0);
      for (std::uint32_t i : order[f]) {
        const int k = node_of[i];
        if (k < 0) continue;
        const int si = slot_of[static_cast<std::size_t>(k)];
        if (si < 0) continue;
        const auto s = static_cast<std::size_t>(si);
        const double xv = X(i, static_cast<Eigen::Index>(f));
        if (has_last[s] && xv > last[s]) {
          const std::size_t nl = left_count[s];
          const std::size_t nr = count[s] - nl;
          if (nl >= config.min_samples_leaf && nr >= config.min_samples_leaf) {
            const double gl = left_sum[s];
            const double gr = total[s] - gl;
            const double gain = gl * gl / static_cast<double>(nl) + gr * gr / static_cast<double>(nr) -
                                total[s] * total[s] / static_cast<double>(count[s]);
            if (gain > best[s].gain) {
              double thr = 0.5 * (last[s] + xv);
              if (!(thr > last[s])) thr = xv;
              best[s] = Candidate{gain, static_cast<int>(f), thr};
            }
          }
        }
        left_sum[s] += residual(static_cast<Eigen::Index>(i));
        ++left_count[s];
        last[s] = xv;
        has_last[s] = 1;
      }
    }

    std::vector<int> next;
    for (std::size_t s = 0; s < slots; ++s) {
      if (best[s].feature < 0) continue;
      const int id = frontier[s];
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.left = left;
      node.right = left + 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (node_of[i] < 0) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(node_of[i])];
      if (node.feature < 0) continue;
      node_of[i] = X(static_cast<Eigen::Index>(i), node.feature) < node.threshold ? node.left : node.right;
    }
    frontier = std::move(next);
  }

  std::vector<double> r_sum(tree.nodes.size(), 0.0);
  std::vector<double> h_sum(tree.nodes.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (node_of[i] < 0) continue;
    r_sum[static_cast<std::size_t>(node_of[i])] += residual(static_cast<Eigen::Index>(i));
    h_sum[static_cast<std::size_t>(node_of[i])] += hessian(static_cast<Eigen::Index>(i));
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    if (tree.nodes[k].feature < 0) tree.nodes[k].value = r_sum[k] / std::max(h_sum[k], kMinHessian);
  }
  return tree;
}

BinaryGbt fit_binary(const Eigen::MatrixXd& X, const SortedColumns& order, const std::vector<double>& y,
                     const GbtConfig& config, std::uint64_t stream) {
  const auto n = static_cast<Eigen::Index>(y.size());
  BinaryGbt model;
  model.learning_rate = config.learning_rate;
  const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  model.init_margin = std::log(prior / (1.0 - prior));

  Eigen::VectorXd margin = Eigen::VectorXd::Constant(n, model.init_margin);
  Eigen::VectorXd residual(n);
  Eigen::VectorXd hessian(n);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::mt19937_64 rng(derive_seed(config.seed, stream));
  for (std::size_t round = 0; round < config.n_rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(margin(i));
      residual(i) = y[static_cast<std::size_t>(i)] - p;
      hessian(i) = p * (1.0 - p);
    }
    if (config.subsample < 1.0) {
      for (auto& a : active) a = static_cast<double>(rng() >> 11) * 0x1.0p-53 < config.subsample ? 1 : 0;
    }
    RegressionTree tree = grow_tree(X, order, residual, hessian, active, config);
    for (Eigen::Index i = 0; i < n; ++i) margin(i) += config.learning_rate * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace

void GbtConfig::validate() const {
  if (max_depth < 1) throw ContractError("gbt: max_depth must be at least 1");
  if (!(learning_rate > 0.0)) throw ContractError("gbt: learning_rate must be positive");
  if (min_samples_leaf < 1) throw ContractError("gbt: min_samples_leaf must be at least 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ContractError("gbt: subsample must lie in (0,1]");
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    k = static_cast<std::size_t>(row(nodes[k].feature) < nodes[k].threshold ? nodes[k].left : nodes[k].right);
  }
  return nodes[k].value;
}

Eigen::VectorXd BinaryGbt::margin(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), init_margin);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::RowVectorXd row = X.row(i);
    double acc = 0.0;
    for (const auto& tree : trees) acc += tree.predict(row);
    out(i) += learning_rate * acc;
  }
  return out;
}

Eigen::VectorXd SurrogateModel::margin(const Eigen::MatrixXd& X, std::size_t cls) const {
  if (static_cast<std::size_t>(X.cols()) != n_features) {
    throw DimensionError("surrogate: input has " + std::to_string(X.cols()) + " columns, model expects " +
                         std::to_string(n_features));
  }
  if (cls >= n_classes) throw LabelError("surrogate: class slot " + std::to_string(cls) + " out of range");
  if (n_classes == 2) {
    Eigen::VectorXd m = models[0].margin(X);
    return cls == 1 ? m : Eigen::VectorXd(-m);
  }
  return models[cls].margin(X);
}

Eigen::MatrixXd SurrogateModel::proba(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(n_classes));
  if (n_classes == 2) {
    const Eigen::VectorXd m = margin(X, 1);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      out(i, 1) = sigmoid(m(i));
      out(i, 0) = 1.0 - out(i, 1);
    }
    return out;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.col(static_cast<Eigen::Index>(c)) = margin(X, c).unaryExpr([](double v) { return sigmoid(v); });
  }
  return out;
}

std::vector<int> SurrogateModel::predict(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd p = proba(X);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::Index arg = 0;
    p.row(i).maxCoeff(&arg);
    out.push_back(classes[static_cast<std::size_t>(arg)]);
  }
  return out;
}

std::set<std::size_t> SurrogateModel::used_features() const {
  std::set<std::size_t> used;
  for (const auto& m : models) {
    for (const auto& t : m.trees) {
      for (const auto& node : t.nodes) {
        if (node.feature >= 0) used.insert(static_cast<std::size_t>(node.feature));
      }
    }
  }
  return used;
}

SurrogateModel train_surrogate(const Eigen::MatrixXd& X, std::span<const int> targets, const GbtConfig& config) {
  config.validate();
  if (static_cast<Eigen::Index>(targets.size()) != X.rows()) {
    throw DimensionError("train_surrogate: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(X.rows()) + " rows");
  }
  std::vector<int> classes(targets.begin(), targets.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ContractError("train_surrogate: target has a single class");

  SurrogateModel model;
  model.n_features = static_cast<std::size_t>(X.cols());
  model.n_classes = classes.size();
  model.classes = classes;
  const SortedColumns order = presort(X);
  const std::size_t n_models = classes.size() == 2 ? 1 : classes.size();
  for (std::size_t m = 0; m < n_models; ++m) {
    const int positive = classes.size() == 2 ? classes[1] : classes[m];
    std::vector<double> y(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) y[i] = targets[i] == positive ? 1.0 : 0.0;
    model.models.push_back(fit_binary(X, order, y, config, m));
  }
  return model;
}

}  // namespace advrep
