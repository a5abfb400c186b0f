#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "advrep/error.hpp"
#include "advrep/graph.hpp"
#include "advrep/manifold.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace advrep;
using testing::random_matrix;

TEST_SUITE("manifold") {

TEST_CASE("pca") {
  std::mt19937_64 rng(51);
  // rank-2 data in 6 dimensions
  const Eigen::MatrixXd X = random_matrix(30, 2, rng) * random_matrix(2, 6, rng);
  const PcaResult p = pca(X, 2);
  const Eigen::MatrixXd recon = (p.scores * p.components.transpose()).rowwise() + p.mean;
  CHECK((recon - X).cwiseAbs().maxCoeff() <= 1e-8);
  const Eigen::MatrixXd cov = p.scores.transpose() * p.scores;
  CHECK(std::abs(cov(0, 1)) <= 1e-8);

  // dual oracle: eigendecomposition of the covariance
  const Eigen::MatrixXd Y = random_matrix(20, 5, rng);
  const PcaResult q = pca(Y, 3);
  const Eigen::MatrixXd centered = Y.rowwise() - Y.colwise().mean();
  const Eigen::MatrixXd C = centered.transpose() * centered / 19.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Eigen::VectorXd v = eig.eigenvectors().col(4 - k);
    CHECK(std::abs(q.explained_variance(k) - eig.eigenvalues()(4 - k)) <= 1e-8);
    CHECK(std::min((v - q.components.col(k)).norm(), (v + q.components.col(k)).norm()) <= 1e-8);
  }
  CHECK_THROWS_AS(pca(Y, 6), ContractError);
}

TEST_CASE("fit_ab against an independent curve fit") {
  // scipy.optimize.curve_fit on the same 300-point target
  auto [a, b] = fit_ab(0.1, 1.0);
  CHECK(std::abs(a - 1.5769434602697652) < 1e-4);
  CHECK(std::abs(b - 0.8950608778515733) < 1e-4);
  std::tie(a, b) = fit_ab(0.3, 1.0);
  CHECK(std::abs(a - 0.9921756195894755) < 1e-4);
  CHECK(std::abs(b - 1.112253384404663) < 1e-4);
  std::tie(a, b) = fit_ab(0.5, 2.0);
  CHECK(std::abs(a - 0.2588787412869628) < 1e-4);
  CHECK(std::abs(b - 1.0574996994409025) < 1e-4);
}

TEST_CASE("2-D embedding") {
  std::mt19937_64 rng(52);
  Eigen::MatrixXd X = random_matrix(80, 5, rng, 0.5);
  X.bottomRows(40).array() += 8.0;
  X.row(1) = X.row(0);
  UmapConfig c;
  c.n_neighbors = 10;
  c.epochs = 100;
  c.seed = 3;
  const Embedding2D e = embed_2d(X, c, "test");
  CHECK(e.coords.rows() == 80);
  CHECK(e.source == "test");
  const Eigen::RowVector2d m0 = e.coords.topRows(40).colwise().mean();
  const Eigen::RowVector2d m1 = e.coords.bottomRows(40).colwise().mean();
  double spread = 0.0;
  for (Eigen::Index i = 0; i < 80; ++i) spread += (e.coords.row(i) - (i < 40 ? m0 : m1)).norm();
  spread /= 80.0;
  CHECK((m0 - m1).norm() > 3.0 * spread);
  CHECK(embed_2d(X, c).coords == e.coords);
  // duplicates end up close compared with the blob size
  CHECK((e.coords.row(0) - e.coords.row(1)).norm() < spread);
  c.n_neighbors = 80;
  CHECK_THROWS_AS(embed_2d(X, c), ContractError);
}

TEST_CASE("silhouette examples") {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 0, 1, 3, 0, 3, 1;
  const std::vector<int> l = {0, 0, 1, 1};
  // 1 - 1/((3 + sqrt(10))/2) for every point; sklearn agrees
  CHECK(silhouette(X, l) == doctest::Approx(0.6754446796632414).epsilon(1e-15));

  Eigen::MatrixXd Y(6, 2);
  Y << 0, 0, 2, 0, 1, 3, 7, 7, 9, 8, 6, 1;
  CHECK(silhouette(Y, std::vector<int>{0, 0, 1, 1, 2, 2}) == doctest::Approx(-0.03244661158226312).epsilon(1e-13));

  Eigen::MatrixXd far(6, 1);
  far << 0, 0.01, 0.02, 100, 100.01, 100.02;
  CHECK(silhouette(far, std::vector<int>{0, 0, 0, 1, 1, 1}) > 0.9);

  // singletons contribute 0
  Eigen::MatrixXd s(3, 1);
  s << 0, 1, 5;
  const double v = silhouette(s, std::vector<int>{0, 0, 1});
  CHECK(v == doctest::Approx((0.8 + 0.75) / 3.0));
  CHECK_THROWS_AS(silhouette(s, std::vector<int>{2, 2, 2}), ContractError);
}

TEST_CASE("silhouette of random labels on one blob is near zero") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const Eigen::MatrixXd X = random_matrix(200, 2, rng);
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) l.push_back(static_cast<int>(rng() % 3));
    CHECK(std::abs(silhouette(X, l)) < 0.1);
  }
}

TEST_CASE("calinski-harabasz examples") {
  Eigen::MatrixXd X(6, 2);
  X << 0, 0, 1, 0, 0, 1, 4, 4, 5, 4, 4, 5;
  // B = 48, W = 8/3, (48/1)/((8/3)/4) = 72
  CHECK(calinski_harabasz(X, std::vector<int>{0, 0, 0, 1, 1, 1}) == doctest::Approx(72.0).epsilon(1e-14));
  Eigen::MatrixXd shifted = X;
  shifted.array() += 123.5;
  CHECK(calinski_harabasz(shifted, std::vector<int>{0, 0, 0, 1, 1, 1}) == doctest::Approx(72.0).epsilon(1e-12));

  Eigen::MatrixXd dup(4, 2);
  dup << 1, 1, 1, 1, 5, 5, 5, 5;
  CHECK(calinski_harabasz(dup, std::vector<int>{0, 0, 1, 1}) == kCalinskiHarabaszCap);
  CHECK_THROWS_AS(calinski_harabasz(dup, std::vector<int>{0, 1, 2, 3}), ContractError);
}

TEST_CASE("metrics equal brute force") {
  std::mt19937_64 rng(53);
  for (int inst = 0; inst < 30; ++inst) {
    const Eigen::Index n = 6 + static_cast<Eigen::Index>(rng() % 45);
    const int C = 2 + static_cast<int>(rng() % 4);
    const Eigen::MatrixXd X = random_matrix(n, 2, rng);
    std::vector<int> l;
    for (Eigen::Index i = 0; i < n; ++i) l.push_back(i < C ? static_cast<int>(i) : static_cast<int>(rng() % C));
    CHECK(silhouette(X, l) == oracle::silhouette(X, l));
    CHECK(calinski_harabasz(X, l) == oracle::calinski_harabasz(X, l));
  }
}

TEST_CASE("minmax normalization") {
  const std::vector<double> a = {1, 3, 5};
  CHECK(minmax_normalize(a) == std::vector<double>{0, 0.5, 1});
  const std::vector<double> c = {2, 2, 2};
  CHECK(minmax_normalize(c) == std::vector<double>{0.5, 0.5, 0.5});
  const std::vector<double> u = {0, 0.25, 1};
  CHECK(minmax_normalize(u) == u);
}

TEST_CASE("lowess") {
  std::vector<double> x, y;
  for (int i = 0; i < 12; ++i) {
    x.push_back(i * i * 0.5);
    y.push_back(3.0 - 2.0 * x.back());
  }
  const auto lin = lowess(x, y, 0.3);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(lin[i] - y[i]) < 1e-10);

  const std::vector<double> flat(12, 4.25);
  for (double v : lowess(x, flat, 0.5)) CHECK(std::abs(v - 4.25) < 1e-12);

  // statsmodels lowess(it=0, frac=0.6); 6 of 10 points under either rounding of frac*n
  const std::vector<double> ex = {1, 5, 10, 50, 70, 100, 150, 200, 300, 499};
  const std::vector<double> ey = {0.1, 0.3, 0.2, 0.8, 0.7, 0.95, 0.9, 0.85, 1.0, 0.97};
  const std::vector<double> expect = {0.16275068608779267, 0.20557358200087875, 0.2585903935929703,
                                      0.6892471407174168,  0.7933444795721969,  0.8543926608547705,
                                      0.8714121735487608,  0.9034350758039473,  0.9709750755307451,
                                      0.9829752318296454};
  const auto got = lowess(ex, ey, 0.6);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);

  std::mt19937_64 rng(54);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> nx, ny;
  for (int i = 0; i < 40; ++i) {
    nx.push_back(i);
    ny.push_back(0.1 * i + noise(rng));
  }
  const auto sm = lowess(nx, ny, 1.0);
  auto variance = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    for (double e : v) s += (e - m) * (e - m);
    return s;
  };
  CHECK(variance(sm) < variance(ny));
  CHECK_THROWS_AS(lowess(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 0.5), ContractError);
}

}  // TEST_SUITE

TEST_SUITE("graph") {

TEST_CASE("nearest neighbors match a brute-force sort") {
  std::mt19937_64 rng(61);
  const Eigen::MatrixXd X = random_matrix(40, 3, rng);
  const auto nn = nearest_neighbors(X, 5);
  for (Eigen::Index i = 0; i < 40; ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (Eigen::Index j = 0; j < 40; ++j) {
      if (j != i) all.push_back({(X.row(i) - X.row(j)).norm(), static_cast<std::size_t>(j)});
    }
    std::sort(all.begin(), all.end());
    for (std::size_t t = 0; t < 5; ++t) CHECK(nn[static_cast<std::size_t>(i)][t].index == all[t].second);
  }
}

TEST_CASE("knn graph") {
  Eigen::MatrixXd line(3, 1);
  line << 0, 1, 2;
  const KnnGraph g = knn_graph(line, 1);
  // 0->1, 1->0 (tie with 2 goes low), 2->1: chain 0-1-2
  CHECK(g.graph.weight(0, 1) > 0.0);
  CHECK(g.graph.weight(1, 2) > 0.0);
  CHECK(g.graph.weight(0, 2) == 0.0);

  std::mt19937_64 rng(62);
  const KnnGraph r = knn_graph(random_matrix(50, 4, rng), 6);
  for (std::size_t u = 0; u < 50; ++u) {
    for (const auto& [v, w] : r.graph.adj[u]) {
      CHECK(w == r.graph.weight(v, u));
      CHECK(w > 0.0);
      CHECK(w <= 1.0);
    }
  }
}

TEST_CASE("rb quality by hand") {
  const std::vector<Edge> tri = {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}};
  const WeightedGraph g = WeightedGraph::from_edges(3, tri);
  // one community: e = 6 (ordered pairs), K = 6, m = 3 -> 6 - 36γ/6
  CHECK(rb_quality(g, std::vector<int>{0, 0, 0}, 1.0) == doctest::Approx(0.0));
  CHECK(rb_quality(g, std::vector<int>{0, 0, 0}, 0.5) == doctest::Approx(3.0));
  // singletons: 3 × (-γ 4/6)
  CHECK(rb_quality(g, std::vector<int>{0, 1, 2}, 1.0) == doctest::Approx(-2.0));

  const WeightedGraph empty = WeightedGraph::from_edges(4, std::vector<Edge>{});
  CHECK(rb_quality(empty, std::vector<int>{0, 1, 2, 3}, 1.0) == 0.0);

  const std::vector<Edge> bad = {{0, 0, 1.0}};
  CHECK_THROWS_AS(WeightedGraph::from_edges(2, bad), ContractError);
}

TEST_CASE("merging disconnected communities never helps") {
  std::mt19937_64 rng(63);
  for (int rep = 0; rep < 10; ++rep) {
    const WeightedGraph g = oracle::two_components(rng);
    const std::size_t half = g.n / 2;
    std::vector<int> split(g.n), merged(g.n, 0);
    for (std::size_t i = 0; i < g.n; ++i) split[i] = i < half ? 0 : 1;
    CHECK(rb_quality(g, merged, 0.7) <= rb_quality(g, split, 0.7));
  }
}

TEST_CASE("two cliques joined by one edge") {
  const WeightedGraph g = oracle::two_cliques();
  const ClusterAssignment a = leiden(g, 1.0, 4);
  CHECK(a.n_clusters == 2);
  for (int i = 0; i < 5; ++i) {
    CHECK(a.membership[static_cast<std::size_t>(i)] == a.membership[0]);
    CHECK(a.membership[static_cast<std::size_t>(i + 5)] == a.membership[5]);
  }
  std::vector<int> merged(10, 0);
  CHECK(a.quality > rb_quality(g, merged, 1.0));
  CHECK(oracle::best_single_move_gain(g, a.membership, 1.0) <= 0.0);
}

TEST_CASE("vanishing resolution favors one community") {
  const WeightedGraph g = oracle::two_cliques();
  const ClusterAssignment a = leiden(g, 1e-4, 4);
  CHECK(a.n_clusters == 1);
  std::vector<int> split(10);
  for (int i = 0; i < 10; ++i) split[static_cast<std::size_t>(i)] = i < 5 ? 0 : 1;
  CHECK(rb_quality(g, a.membership, 1e-4) > rb_quality(g, split, 1e-4));
}

TEST_CASE("leiden on random graphs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const WeightedGraph g = oracle::random_graph(10 + rng() % 40, rng);
    for (double gamma : {0.3, 1.0}) {
      const ClusterAssignment a = leiden(g, gamma, seed);
      CHECK(a.quality == doctest::Approx(rb_quality(g, a.membership, gamma)));
      for (std::size_t p = 1; p < a.phase_quality.size(); ++p) {
        CHECK(a.phase_quality[p] >= a.phase_quality[p - 1] - 1e-9);
      }
      CHECK(oracle::best_single_move_gain(g, a.membership, gamma) <= 1e-9);
      CHECK(leiden(g, gamma, seed).membership == a.membership);
      int max_id = 0;
      for (int m : a.membership) max_id = std::max(max_id, m);
      CHECK(static_cast<std::size_t>(max_id) + 1 == a.n_clusters);
    }
  }
}

}  // TEST_SUITE
