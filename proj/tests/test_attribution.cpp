#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "advrep/attribution.hpp"
#include "advrep/error.hpp"
#include "advrep/shapley.hpp"
#include "advrep/surrogate.hpp"
#include "helpers.hpp"

using namespace advrep;
using testing::random_matrix;

namespace {

// Random smooth model with pairwise interactions: tanh(w·x + xᵀAx) + 0.5 sin(x_0 x_1).
BatchFn random_model(std::size_t d, std::mt19937_64& rng) {
  const Eigen::VectorXd w = random_matrix(static_cast<Eigen::Index>(d), 1, rng);
  const Eigen::MatrixXd A = random_matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d), rng, 0.3);
  return [w, A](const Eigen::MatrixXd& X) {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      out(i) = std::tanh(w.dot(x) + x.dot(A * x)) + (x.size() > 1 ? 0.5 * std::sin(x(0) * x(1)) : 0.0);
    }
    return out;
  };
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_SUITE("shapley") {

TEST_CASE("exact shapley on an additive model") {
  const Eigen::VectorXd c = vec({2.0, -1.0, 0.5});
  BatchFn f = [c](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X * c; };
  const Eigen::VectorXd x = vec({1.0, 2.0, 3.0});
  const Eigen::VectorXd ref = vec({0.5, 0.5, -1.0});
  const ShapleyRow r = exact_shapley(f, x, ref);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(r.phi(j) == doctest::Approx(c(j) * (x(j) - ref(j))).epsilon(1e-14));
}

TEST_CASE("exact shapley symmetry and interaction split") {
  // x1*x2 from reference 0: only the full coalition pays, so each gets half
  BatchFn f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X.col(0).cwiseProduct(X.col(1)); };
  const ShapleyRow r = exact_shapley(f, vec({1.0, 1.0}), vec({0.0, 0.0}));
  CHECK(r.phi(0) == 0.5);
  CHECK(r.phi(1) == 0.5);

  // XOR-like on {0,1}: v(∅)=0, v(1)=v(2)=1, v(12)=0
  BatchFn x_or = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return (X.col(0) - X.col(1)).cwiseAbs();
  };
  const ShapleyRow s = exact_shapley(x_or, vec({1.0, 1.0}), vec({0.0, 0.0}));
  CHECK(s.phi(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.phi(0) == s.phi(1));
}

TEST_CASE("kernel shap with full enumeration equals exact shapley") {
  std::mt19937_64 rng(21);
  for (std::size_t d : {1u, 2u, 3u, 5u, 7u}) {
    BatchFn f = random_model(d, rng);
    const Eigen::VectorXd x = random_matrix(static_cast<Eigen::Index>(d), 1, rng);
    const Eigen::VectorXd ref = random_matrix(static_cast<Eigen::Index>(d), 1, rng);
    const ShapleyRow exact = exact_shapley(f, x, ref);
    std::mt19937_64 krng(1);
    const std::size_t budget = std::max<std::size_t>((std::size_t{1} << d), d + 2);
    const ShapleyRow k = kernel_shap(f, x, ref, budget, krng);
    CHECK((k.phi - exact.phi).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(k.phi.sum() - (k.output - k.base)) <= 1e-8);
  }
}

TEST_CASE("kernel shap recovers an additive model under sampling") {
  std::mt19937_64 rng(22);
  const Eigen::VectorXd c = random_matrix(20, 1, rng);
  BatchFn f = [c](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X * c; };
  const Eigen::VectorXd x = random_matrix(20, 1, rng);
  const Eigen::VectorXd ref = random_matrix(20, 1, rng);
  std::mt19937_64 krng(3);
  const ShapleyRow k = kernel_shap(f, x, ref, 200, krng);
  const Eigen::VectorXd expect = c.cwiseProduct(x - ref);
  CHECK((k.phi - expect).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(k.phi.sum() - (k.output - k.base)) <= 1e-8);
}

TEST_CASE("kernel shap contracts") {
  BatchFn f = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return X.rowwise().sum(); };
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(kernel_shap(f, vec({1, 2, 3}), vec({0, 0, 0}), 4, rng), ContractError);
  CHECK_THROWS_AS(kernel_shap(f, vec({1, 2, 3}), vec({0, 0}), 16, rng), DimensionError);
  CHECK_THROWS_AS(exact_shapley(f, Eigen::VectorXd::Zero(13), Eigen::VectorXd::Zero(13)), ContractError);
}

TEST_CASE("integrated gradients") {
  const Eigen::VectorXd c = vec({1.0, -3.0, 0.25});
  GradientFn lin = [c](const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
    return c.transpose().replicate(X.rows(), 1);
  };
  const Eigen::VectorXd x = vec({2.0, 1.0, -4.0});
  const Eigen::VectorXd b = vec({0.5, 0.0, 0.0});
  for (std::size_t steps : {1u, 3u, 50u}) {
    const Eigen::VectorXd phi = integrated_gradients(lin, x, b, steps);
    CHECK((phi - c.cwiseProduct(x - b)).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(integrated_gradients(lin, x, x, 16).cwiseAbs().maxCoeff() == 0.0);

  // f = sum x^3: completeness with the midpoint rule
  GradientFn cube = [](const Eigen::MatrixXd& X) -> Eigen::MatrixXd { return 3.0 * X.array().square(); };
  const Eigen::VectorXd phi = integrated_gradients(cube, x, b, 256);
  const double delta = x.array().cube().sum() - b.array().cube().sum();
  CHECK(std::abs(phi.sum() - delta) < 1e-3);
}

TEST_CASE("violin transform") {
  CHECK(violin_transform(0.0) == 0.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double s = n(rng);
    CHECK(violin_transform(-s) == -violin_transform(s));
  }
  // 50-digit evaluation of -(exp(-2 ln(2 + 1e-9) / ln 10) - 1)
  CHECK(std::abs(violin_transform(1.0) - 0.4523177476953222042508062) <= 1e-9);
  CHECK(std::abs(violin_transform(0.5) - 0.2968482280770237321582755) <= 1e-9);
  CHECK(std::abs(violin_transform(3.0) - 0.7000441503150714979080338) <= 1e-9);
  CHECK(violin_transform(2.0) > violin_transform(1.0));
  Eigen::MatrixXd m(1, 2);
  m << 1.0, -1.0;
  const Eigen::MatrixXd t = violin_transform(m);
  CHECK(t(0, 0) == violin_transform(1.0));
  CHECK(t(0, 1) == -t(0, 0));
  CHECK_THROWS_AS(violin_transform(1.0, -2.0, 1.0), ContractError);
}

}  // TEST_SUITE

TEST_SUITE("surrogate") {

TEST_CASE("separable toy data") {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd X = random_matrix(200, 2, rng);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 200; ++i) y.push_back(X(i, 0) + 0.5 * X(i, 1) > 0.1 ? 1 : 0);
  GbtConfig c;
  c.n_rounds = 50;
  const SurrogateModel m = train_surrogate(X, y, c);
  const auto pred = m.predict(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += static_cast<std::size_t>(pred[i] == y[i]);
  CHECK(static_cast<double>(hits) / 200.0 >= 0.95);

  c.subsample = 0.7;
  c.seed = 4;
  CHECK(train_surrogate(X, y, c).margin(X, 1) == train_surrogate(X, y, c).margin(X, 1));
}

TEST_CASE("zero rounds gives the class prior") {
  std::mt19937_64 rng(32);
  const Eigen::MatrixXd X = random_matrix(40, 3, rng);
  std::vector<int> y(40, 0);
  for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i * 4)] = 1;
  GbtConfig c;
  c.n_rounds = 0;
  const SurrogateModel m = train_surrogate(X, y, c);
  const Eigen::MatrixXd p = m.proba(X);
  CHECK((p.col(1).array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("one-vs-rest on three classes") {
  std::mt19937_64 rng(33);
  Eigen::MatrixXd X = random_matrix(150, 2, rng, 0.3);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 150; ++i) {
    const int k = static_cast<int>(i % 3);
    X(i, 0) += 3.0 * k;
    y.push_back(10 + k);
  }
  GbtConfig c;
  c.n_rounds = 30;
  const SurrogateModel m = train_surrogate(X, y, c);
  CHECK(m.n_classes == 3);
  CHECK(m.classes == std::vector<int>{10, 11, 12});
  CHECK(m.predict(X) == y);
  CHECK_THROWS_AS(m.margin(X, 3), LabelError);
  CHECK_THROWS_AS(train_surrogate(X, std::vector<int>(150, 1), c), ContractError);
}

}  // TEST_SUITE

TEST_SUITE("attribution") {

TEST_CASE("background selection is label balanced") {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd X = random_matrix(100, 2, rng);
  std::vector<int> y(100, 0);
  for (int i = 0; i < 20; ++i) y[static_cast<std::size_t>(i)] = 1;
  std::vector<std::size_t> pool(100);
  for (std::size_t i = 0; i < 100; ++i) pool[i] = i;
  const BackgroundSet bg = select_background(X, y, pool, 30, 7);
  CHECK(bg.rows.rows() == 30);
  int pos = 0;
  for (std::size_t i : bg.indices) pos += y[i];
  CHECK(pos == 15);
  CHECK(bg.policy == "label_balanced");
  CHECK(select_background(X, y, pool, 30, 7).indices == bg.indices);
  const BackgroundSet all = select_background(X, y, pool, 500, 7);
  CHECK(all.rows.rows() == 100);
}

TEST_CASE("surrogate attributions match exact shapley and never credit unused features") {
  std::mt19937_64 rng(42);
  const Eigen::MatrixXd A = random_matrix(120, 6, rng);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 120; ++i) y.push_back(A(i, 1) - A(i, 4) > 0.0 ? 1 : 0);
  GbtConfig c;
  c.n_rounds = 15;
  c.max_depth = 2;
  const SurrogateModel m = train_surrogate(A, y, c);
  std::vector<std::size_t> pool(120);
  for (std::size_t i = 0; i < 120; ++i) pool[i] = i;
  const BackgroundSet bg = select_background(A, y, pool, 40, 1);
  const AttributionMatrix at = surrogate_attributions(m, A.topRows(10), bg, 64, 3);
  CHECK(at.values.rows() == 10);
  CHECK(at.values.cols() == 6);

  BatchFn f = [&m](const Eigen::MatrixXd& X) -> Eigen::VectorXd { return m.margin(X, 1); };
  const Eigen::VectorXd ref = bg.mean();
  CHECK(at.base_value == doctest::Approx(f(ref.transpose())(0)).epsilon(1e-15));
  CHECK(std::abs(at.background_output_mean - f(bg.rows).mean()) < 1e-8);
  const auto used = m.used_features();
  for (Eigen::Index i = 0; i < 10; ++i) {
    const ShapleyRow exact = exact_shapley(f, A.row(i).transpose(), ref);
    CHECK((at.values.row(i).transpose() - exact.phi).cwiseAbs().maxCoeff() < 1e-6);
    for (std::size_t j = 0; j < 6; ++j) {
      if (!used.count(j)) CHECK(std::abs(at.values(i, static_cast<Eigen::Index>(j))) < 1e-12);
    }
  }
}

TEST_CASE("explain_rows ignores worker count and is deterministic") {
  std::mt19937_64 rng(43);
  BatchFn f = random_model(14, rng);
  const Eigen::MatrixXd X = random_matrix(6, 14, rng);
  BackgroundSet bg;
  bg.rows = random_matrix(5, 14, rng);
  bg.policy = "test";
  const AttributionMatrix a = explain_rows(f, X, bg, 100, 9);
  const AttributionMatrix b = explain_rows(f, X, bg, 100, 9);
  CHECK(a.values == b.values);
  CHECK(a.sample_ids.front() == "r0");
  CHECK(a.feature_names.back() == "f13");
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double out = f(X.row(i))(0);
    CHECK(std::abs(a.values.row(i).sum() - (out - a.base_value)) < 1e-8);
  }
}

TEST_CASE("mean abs and top k") {
  Eigen::MatrixXd v(2, 4);
  v << 1, -2, 3, 0, -1, 2, -3, 0;
  const Eigen::VectorXd m = mean_abs_attribution(v);
  CHECK(m(0) == 1.0);
  CHECK(m(2) == 3.0);
  Eigen::VectorXd s(5);
  s << 1, 3, 3, 0, 2;
  CHECK(top_k(s, 3) == std::vector<std::size_t>{1, 2, 4});
  CHECK(top_k(s, 9).size() == 5);
}

TEST_CASE("attribution files round-trip") {
  AttributionMatrix a;
  a.values = Eigen::MatrixXd::Random(3, 2);
  a.base_value = 0.125;
  a.background_output_mean = -0.5;
  a.method = "kernel_shap";
  a.target = "t";
  a.feature_names = {"x", "y"};
  a.sample_ids = {"a", "b", "c"};
  a.background_policy = "label_balanced";
  a.seed = 77;
  a.budget = 128;
  const auto dir = std::filesystem::temp_directory_path();
  write_attribution(a, dir / "advrep_attr.csv", dir / "advrep_attr.json");
  const AttributionMatrix b = read_attribution(dir / "advrep_attr.csv", dir / "advrep_attr.json");
  CHECK(b.values == a.values);
  CHECK(b.base_value == a.base_value);
  CHECK(b.background_output_mean == a.background_output_mean);
  CHECK(b.sample_ids == a.sample_ids);
  CHECK(b.seed == 77);
  CHECK(b.budget == 128);
}

}  // TEST_SUITE
