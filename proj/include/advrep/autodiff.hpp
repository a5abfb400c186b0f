#pragma once

// Minimal reverse-mode differentiation over dense 2-D matrices.
//
// A Graph is a tape: every op appends a node holding its forward value and a
// closure that maps the node's upstream gradient onto its inputs. Because
// nodes are appended in evaluation order the tape is already topologically
// sorted, and backward() walks it once in reverse.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace advrep::ad {

using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class Mode { train, eval };

/// A trainable tensor. `grad` accumulates across backward() calls until
/// zero_grad() is called.
struct Tensor {
  Matrix value;
  Matrix grad;

  Tensor() = default;
  explicit Tensor(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

class Graph;

/// Receives the upstream gradient of a node and pushes contributions into
/// its inputs via Graph::accumulate.
using BackwardFn = std::function<void(Graph&, const Matrix& upstream)>;

class Graph {
 public:
  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf whose gradient is retained after backward() (e.g. the model input for IG).
  Var input(Matrix value);
  /// Leaf bound to a parameter; backward() adds the node gradient into param.grad.
  Var parameter(Tensor& param);

  /// Appends an op node. The node requires a gradient iff any input does.
  Var add_node(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() seed w.r.t. v; zeros if nothing flowed into v.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Adds `contribution` into the gradient buffer of v (no-op for constants).
  void accumulate(Var v, const Matrix& contribution);

  /// Reverse sweep from a 1x1 loss node. Throws ContractError for a non-scalar seed.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

// ---- ops -----------------------------------------------------------------

/// x[n×d]·W[d×m] + b[1×m].
Var linear(Graph& g, Var x, Var weight, Var bias);

/// max(x, slope·x) elementwise, slope in (0,1).
Var leaky_relu(Graph& g, Var x, double slope);

struct BatchNormState {
  Matrix running_mean;  // 1×m
  Matrix running_var;   // 1×m, unbiased batch variance is folded in
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over rows. Train mode normalizes with the batch
/// statistics and updates `state`; eval mode uses the running statistics.
Var batchnorm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);

/// Inverted dropout: in train mode each entry is zeroed with probability p
/// and survivors are scaled by 1/(1-p). Eval mode is the identity.
Var dropout(Graph& g, Var x, double p, Mode mode, Rng& rng);

/// Gradient reversal: identity forward, upstream gradient times -lambda backward.
Var grl(Graph& g, Var x, double lambda);

Var sigmoid(Graph& g, Var x);
Var softmax_rows(Graph& g, Var x);

/// Probability clamp used inside the log of both losses.
inline constexpr double kProbEps = 1e-7;

/// Mean binary cross-entropy of probabilities p[n×1] against labels in {0,1}.
Var bce_loss(Graph& g, Var p, std::span<const int> labels, double eps = kProbEps);

/// Mean categorical cross-entropy of row-stochastic probs[n×K] against class ids.
Var ce_loss(Graph& g, Var probs, std::span<const int> classes, double eps = kProbEps);

Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
/// Sum of all entries as a 1×1 node.
Var sum(Graph& g, Var x);

/// Central differences (f(x+h·e)-f(x-h·e))/(2h) for every coordinate of x.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

std::string shape_string(const Matrix& m);

}  // namespace advrep::ad
