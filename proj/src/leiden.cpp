#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "advrep/error.hpp"
#include "advrep/graph.hpp"

namespace advrep {

namespace {

constexpr std::size_t kMaxIterations = 50;

// A level of the aggregation hierarchy. Each node carries its degree sum in
// the original graph and the ordered-pair weight already inside it.
struct Level {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> node_weight;
};

struct Context {
  double gamma;
  double m;
  std::mt19937_64 rng;
};

// Renumbers ids by first appearance; returns the number of distinct ids.
std::size_t renumber(std::vector<std::size_t>& ids) {
  std::map<std::size_t, std::size_t> remap;
  for (auto& c : ids) {
    auto [it, inserted] = remap.emplace(c, remap.size());
    c = it->second;
  }
  return remap.size();
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Fast local moving. `comm` holds ids below level.n.
bool move_nodes(const Level& level, std::vector<std::size_t>& comm, Context& ctx) {
  const std::size_t n = level.n;
  std::vector<double> K(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    K[comm[v]] += level.node_weight[v];
    ++count[comm[v]];
  }
  std::set<std::size_t> empty;
  for (std::size_t c = 0; c < n; ++c) {
    if (count[c] == 0) empty.insert(c);
  }

  std::deque<std::size_t> queue;
  std::vector<char> queued(n, 1);
  for (std::size_t v : shuffled_order(n, ctx.rng)) queue.push_back(v);
  std::vector<double> to_comm(n, 0.0);
  std::vector<std::size_t> touched;
  const double scale = ctx.gamma / (2.0 * ctx.m);
  bool moved = false;

  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    queued[v] = 0;
    const std::size_t A = comm[v];
    const double kv = level.node_weight[v];
    for (const auto& [u, w] : level.adj[v]) {
      const std::size_t c = comm[u];
      if (to_comm[c] == 0.0) touched.push_back(c);
      to_comm[c] += w;
    }
    const double w_A = to_comm[A];
    const double leave = (K[A] - kv) * (K[A] - kv) - K[A] * K[A];
    auto gain = [&](std::size_t B, double w_B) {
      return 2.0 * (w_B - w_A) - scale * ((K[B] + kv) * (K[B] + kv) - K[B] * K[B] + leave);
    };

    std::size_t best = A;
    double best_gain = 0.0;
    std::sort(touched.begin(), touched.end());
    for (std::size_t B : touched) {
      if (B == A) continue;
      const double g = gain(B, to_comm[B]);
      if (g > best_gain) {
        best_gain = g;
        best = B;
      }
    }
    if (count[A] > 1 && !empty.empty()) {
      const std::size_t E = *empty.begin();
      const double g = gain(E, 0.0);
      if (g > best_gain || (g == best_gain && best != A && E < best)) {
        best_gain = g;
        best = E;
      }
    }
    for (std::size_t c : touched) to_comm[c] = 0.0;
    touched.clear();
    if (best == A) continue;

    K[A] -= kv;
    --count[A];
    if (count[A] == 0) empty.insert(A);
    K[best] += kv;
    if (count[best]++ == 0) empty.erase(best);
    comm[v] = best;
    moved = true;
    for (const auto& [u, w] : level.adj[v]) {
      if (!queued[u] && comm[u] != best) {
        queued[u] = 1;
        queue.push_back(u);
      }
    }
  }
  return moved;
}

// Greedy refinement: singletons inside each community merge into the
// well-connected refined community with the largest positive gain.
std::vector<std::size_t> refine(const Level& level, const std::vector<std::size_t>& comm, Context& ctx) {
  const std::size_t n = level.n;
  std::vector<double> K_S(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) K_S[comm[v]] += level.node_weight[v];

  std::vector<std::size_t> refined(n);
  std::iota(refined.begin(), refined.end(), 0);
  std::vector<double> K_R(level.node_weight);
  std::vector<std::size_t> size(n, 1);
  std::vector<double> external(n, 0.0);  // weight from a refined community to the rest of its parent
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [u, w] : level.adj[v]) {
      if (comm[u] == comm[v]) external[v] += w;
    }
  }
  const std::vector<double> own_external = external;
  const double scale = ctx.gamma / (2.0 * ctx.m);
  std::vector<double> to_ref(n, 0.0);
  std::vector<std::size_t> touched;

  for (std::size_t v : shuffled_order(n, ctx.rng)) {
    if (size[refined[v]] != 1) continue;
    const std::size_t S = comm[v];
    const double kv = level.node_weight[v];
    if (own_external[v] < scale * kv * (K_S[S] - kv)) continue;
    for (const auto& [u, w] : level.adj[v]) {
      if (comm[u] != S) continue;
      const std::size_t r = refined[u];
      if (to_ref[r] == 0.0) touched.push_back(r);
      to_ref[r] += w;
    }
    std::sort(touched.begin(), touched.end());
    std::size_t best = refined[v];
    double best_gain = 0.0;
    for (std::size_t r : touched) {
      if (r == refined[v]) continue;
      if (external[r] < scale * K_R[r] * (K_S[S] - K_R[r])) continue;
      const double g = 2.0 * to_ref[r] - 2.0 * scale * kv * K_R[r];
      if (g > best_gain) {
        best_gain = g;
        best = r;
      }
    }
    if (best != refined[v]) {
      const std::size_t old = refined[v];
      external[best] += own_external[v] - 2.0 * to_ref[best];
      K_R[best] += kv;
      ++size[best];
      K_R[old] = 0.0;
      size[old] = 0;
      external[old] = 0.0;
      refined[v] = best;
    }
    for (std::size_t r : touched) to_ref[r] = 0.0;
    touched.clear();
  }
  return refined;
}

Level aggregate(const Level& level, const std::vector<std::size_t>& group, std::size_t n_groups) {
  Level out;
  out.n = n_groups;
  out.node_weight.assign(n_groups, 0.0);
  std::vector<std::map<std::size_t, double>> acc(n_groups);
  for (std::size_t v = 0; v < level.n; ++v) {
    out.node_weight[group[v]] += level.node_weight[v];
    for (const auto& [u, w] : level.adj[v]) {
      if (group[u] != group[v]) acc[group[v]][group[u]] += w;
    }
  }
  out.adj.resize(n_groups);
  for (std::size_t c = 0; c < n_groups; ++c) out.adj[c].assign(acc[c].begin(), acc[c].end());
  return out;
}

std::vector<int> to_int(const std::vector<std::size_t>& ids) { return {ids.begin(), ids.end()}; }

}  // namespace

ClusterAssignment leiden(const WeightedGraph& graph, double gamma, std::uint64_t seed) {
  if (graph.n == 0) throw ContractError("leiden: empty graph");
  if (!(gamma >= 0.0)) throw ContractError("leiden: resolution must be non-negative");
  ClusterAssignment out;
  out.resolution = gamma;
  const double m = graph.total_weight();
  std::vector<std::size_t> membership(graph.n);
  std::iota(membership.begin(), membership.end(), 0);
  if (m == 0.0) {
    out.membership = to_int(membership);
    out.n_clusters = graph.n;
    out.phase_quality = {0.0};
    return out;
  }

  Level base;
  base.n = graph.n;
  base.adj = graph.adj;
  base.node_weight.resize(graph.n);
  for (std::size_t v = 0; v < graph.n; ++v) base.node_weight[v] = graph.degree(v);

  Context ctx{gamma, m, std::mt19937_64(seed)};
  out.phase_quality.push_back(rb_quality(graph, to_int(membership), gamma));
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    Level level = base;
    std::vector<std::size_t> comm = membership;
    std::vector<std::size_t> node_of(graph.n);
    std::iota(node_of.begin(), node_of.end(), 0);
    bool changed = false;
    while (true) {
      if (move_nodes(level, comm, ctx)) changed = true;
      for (std::size_t v = 0; v < graph.n; ++v) membership[v] = comm[node_of[v]];
      renumber(membership);
      out.phase_quality.push_back(rb_quality(graph, to_int(membership), gamma));

      std::vector<std::size_t> parent = comm;
      const std::size_t n_comm = renumber(parent);
      if (n_comm == level.n) break;
      std::vector<std::size_t> group = refine(level, parent, ctx);
      std::size_t n_groups = renumber(group);
      if (n_groups == level.n) {
        group = parent;
        n_groups = n_comm;
      }
      std::vector<std::size_t> next(n_groups);
      for (std::size_t v = 0; v < level.n; ++v) next[group[v]] = parent[v];
      level = aggregate(level, group, n_groups);
      for (auto& x : node_of) x = group[x];
      comm = std::move(next);
    }
    if (!changed) break;
  }

  out.n_clusters = renumber(membership);
  out.membership = to_int(membership);
  out.quality = rb_quality(graph, out.membership, gamma);
  return out;
}

}  // namespace advrep
