#pragma once

// Weighted undirected graphs, exact kNN graphs and Leiden community
// detection under the RB-configuration quality.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace advrep {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Exact k nearest neighbors of every row (self excluded), nearest first,
/// ties broken toward the lower index.
std::vector<std::vector<Neighbor>> nearest_neighbors(const Eigen::MatrixXd& X, std::size_t k);

struct Edge {
  std::size_t u;
  std::size_t v;
  double weight;
};

/// Undirected graph without self-loops. Each adjacency list is sorted by
/// neighbor index and holds every incident edge once.
struct WeightedGraph {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;

  /// Parallel edges are summed; self-loops and non-positive weights are rejected.
  static WeightedGraph from_edges(std::size_t n, std::span<const Edge> edges);

  double degree(std::size_t v) const;
  /// m: sum of undirected edge weights.
  double total_weight() const;
  double weight(std::size_t u, std::size_t v) const;
};

struct KnnGraph {
  WeightedGraph graph;
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> neighbors;
};

/// sigma_i is the distance to the k-th neighbor; directed weights
/// exp(-d^2/(sigma_i sigma_j)) are scaled so each row's largest is 1, then
/// symmetrized with w(u,v) = max of the two directions.
KnnGraph knn_graph(const Eigen::MatrixXd& X, std::size_t k);

/// Q = sum_c [e_c - gamma K_c^2 / (2m)] with e_c the intra-community weight
/// counted over ordered node pairs (twice the undirected weight) and K_c the
/// community degree sum. Labels may be any non-negative ids.
double rb_quality(const WeightedGraph& graph, std::span<const int> membership, double gamma);

struct ClusterAssignment {
  std::vector<int> membership;  // contiguous ids, numbered by first appearance
  std::size_t n_clusters = 0;
  double resolution = 0.0;
  double quality = 0.0;
  std::vector<double> phase_quality;  // quality after each move phase, in order
};

/// Leiden: fast local moving, greedy well-connected refinement inside each
/// community, aggregation on the refined partition; repeated until a full
/// pass leaves the node-level partition unchanged. Node visiting order is
/// shuffled from `seed`; ties go to the lower community id.
ClusterAssignment leiden(const WeightedGraph& graph, double gamma, std::uint64_t seed);

}  // namespace advrep
