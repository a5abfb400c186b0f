#include "advrep/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "advrep/error.hpp"
#include "advrep/parallel.hpp"

namespace advrep {

std::vector<std::vector<Neighbor>> nearest_neighbors(const Eigen::MatrixXd& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (k < 1 || k >= n) {
    throw ContractError("nearest_neighbors: k=" + std::to_string(k) + " must lie in [1, n) with n=" +
                        std::to_string(n));
  }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = X;
  const auto d = static_cast<std::size_t>(X.cols());
  std::vector<std::vector<Neighbor>> out(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<Neighbor> all;
    all.reserve(n - 1);
    const double* xi = R.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* xj = R.data() + j * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xi[c] - xj[c];
        s += diff * diff;
      }
      all.push_back({j, std::sqrt(s)});
    }
    auto closer = [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    out[i] = std::move(all);
  });
  return out;
}

WeightedGraph WeightedGraph::from_edges(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::map<std::size_t, double>> acc(n);
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) throw ContractError("graph: edge endpoint out of range");
    if (e.u == e.v) throw ContractError("graph: self-loop on node " + std::to_string(e.u));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw ContractError("graph: edge weights must be positive");
    acc[e.u][e.v] += e.weight;
    acc[e.v][e.u] += e.weight;
  }
  WeightedGraph g;
  g.n = n;
  g.adj.resize(n);
  for (std::size_t v = 0; v < n; ++v) g.adj[v].assign(acc[v].begin(), acc[v].end());
  return g;
}

double WeightedGraph::degree(std::size_t v) const {
  double s = 0.0;
  for (const auto& [u, w] : adj[v]) s += w;
  return s;
}

double WeightedGraph::total_weight() const {
  double s = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [u, w] : adj[v]) {
      if (u > v) s += w;
    }
  }
  return s;
}

double WeightedGraph::weight(std::size_t u, std::size_t v) const {
  const auto& list = adj[u];
  auto it = std::lower_bound(list.begin(), list.end(), v, [](const auto& p, std::size_t x) { return p.first < x; });
  return it != list.end() && it->first == v ? it->second : 0.0;
}

KnnGraph knn_graph(const Eigen::MatrixXd& X, std::size_t k) {
  KnnGraph out;
  out.k = k;
  out.neighbors = nearest_neighbors(X, k);
  const std::size_t n = out.neighbors.size();
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = std::max(out.neighbors[i].back().distance, 1e-12);

  std::map<std::pair<std::size_t, std::size_t>, double> sym;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w;
    for (const Neighbor& nb : out.neighbors[i]) {
      w.push_back(std::exp(-nb.distance * nb.distance / (sigma[i] * sigma[nb.index])));
    }
    const double top = *std::max_element(w.begin(), w.end());
    for (std::size_t t = 0; t < w.size(); ++t) {
      const double v = top > 0.0 ? std::max(w[t] / top, std::numeric_limits<double>::min()) : 1.0;
      const std::size_t j = out.neighbors[i][t].index;
      auto key = std::minmax(i, j);
      auto [it, inserted] = sym.emplace(key, v);
      if (!inserted) it->second = std::max(it->second, v);
    }
  }
  std::vector<Edge> edges;
  edges.reserve(sym.size());
  for (const auto& [key, w] : sym) edges.push_back({key.first, key.second, w});
  out.graph = WeightedGraph::from_edges(n, edges);
  return out;
}

double rb_quality(const WeightedGraph& graph, std::span<const int> membership, double gamma) {
  if (membership.size() != graph.n) throw DimensionError("rb_quality: membership length differs from node count");
  const double m = graph.total_weight();
  if (m == 0.0) return 0.0;
  std::size_t C = 0;
  for (int c : membership) {
    if (c < 0) throw LabelError("rb_quality: negative community id");
    C = std::max(C, static_cast<std::size_t>(c) + 1);
  }
  std::vector<double> internal(C, 0.0);
  std::vector<double> K(C, 0.0);
  for (std::size_t v = 0; v < graph.n; ++v) {
    const auto cv = static_cast<std::size_t>(membership[v]);
    for (const auto& [u, w] : graph.adj[v]) {
      K[cv] += w;
      if (static_cast<std::size_t>(membership[u]) == cv) internal[cv] += w;
    }
  }
  double q = 0.0;
  for (std::size_t c = 0; c < C; ++c) q += internal[c] - gamma * K[c] * K[c] / (2.0 * m);
  return q;
}

}  // namespace advrep
