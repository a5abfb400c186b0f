#include "advrep/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advrep/error.hpp"

namespace advrep::ad {

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_labels(std::span<const int> labels, Eigen::Index rows, int n_classes, const char* op) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    std::ostringstream msg;
    msg << op << ": " << labels.size() << " labels for " << rows << " rows";
    throw DimensionError(msg.str());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      std::ostringstream msg;
      msg << op << ": label " << labels[i] << " at row " << i << " outside [0, " << n_classes << ")";
      throw LabelError(msg.str());
    }
  }
}

}  // namespace

std::string shape_string(const Matrix& m) {
  std::ostringstream out;
  out << m.rows() << "x" << m.cols();
  return out.str();
}

// ---- Graph ---------------------------------------------------------------

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var{nodes_.size() - 1};
}

Var Graph::input(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Tensor& param) {
  nodes_.push_back(Node{param.value, {}, {}, {}, &param, true});
  return Var{nodes_.size() - 1};
}

Var Graph::add_node(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backward), nullptr, needs});
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("graph: unknown node id");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw ContractError("graph: unknown node id");
  return nodes_[v.id];
}

const Matrix& Graph::value(Var v) const { return node(v).value; }

Matrix Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

void Graph::accumulate(Var v, const Matrix& contribution) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (contribution.rows() != n.value.rows() || contribution.cols() != n.value.cols()) {
    throw DimensionError("graph: gradient " + shape_string(contribution) + " for value " +
                         shape_string(n.value));
  }
  if (n.grad.size() == 0) {
    n.grad = contribution;
  } else {
    n.grad += contribution;
  }
}

void Graph::backward(Var loss) {
  Node& seed = node(loss);
  if (seed.value.rows() != 1 || seed.value.cols() != 1) {
    throw ContractError("backward: loss node must be 1x1, got " + shape_string(seed.value));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  seed.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    // inputs always precede their consumer, so accumulate() never touches n
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += nodes_[i].grad;
    }
  }
}

// ---- ops -----------------------------------------------------------------

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Matrix& xv = g.value(x);
  const Matrix& wv = g.value(weight);
  const Matrix& bv = g.value(bias);
  if (xv.cols() != wv.rows()) {
    throw DimensionError("linear: input " + shape_string(xv) + " does not match weight " +
                         shape_string(wv));
  }
  if (bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw DimensionError("linear: bias " + shape_string(bv) + " does not match weight " +
                         shape_string(wv));
  }
  Matrix out = xv * wv;
  out.rowwise() += bv.row(0);
  return g.add_node(std::move(out), {x, weight, bias}, [x, weight, bias](Graph& gr, const Matrix& up) {
    if (gr.requires_grad(x)) gr.accumulate(x, up * gr.value(weight).transpose());
    if (gr.requires_grad(weight)) gr.accumulate(weight, gr.value(x).transpose() * up);
    if (gr.requires_grad(bias)) gr.accumulate(bias, up.colwise().sum());
  });
}

Var leaky_relu(Graph& g, Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ContractError("leaky_relu: slope must lie in (0,1)");
  const Matrix& xv = g.value(x);
  Matrix out = xv.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return g.add_node(std::move(out), {x}, [x, slope](Graph& gr, const Matrix& up) {
    const Matrix& xv = gr.value(x);
    Matrix local = xv.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    gr.accumulate(x, up.cwiseProduct(local));
  });
}

Var batchnorm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  const Matrix& xv = g.value(x);
  const Eigen::Index n = xv.rows();
  const Eigen::Index m = xv.cols();
  const Matrix& gv = g.value(gamma);
  const Matrix& bv = g.value(beta);
  if (gv.rows() != 1 || gv.cols() != m || bv.rows() != 1 || bv.cols() != m) {
    throw DimensionError("batchnorm: input " + shape_string(xv) + " with gamma " + shape_string(gv) +
                         " and beta " + shape_string(bv));
  }
  if (state.running_mean.cols() != m || state.running_var.cols() != m) {
    throw DimensionError("batchnorm: running statistics do not match input " + shape_string(xv));
  }

  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;
  if (mode == Mode::train) {
    if (n < 2) throw ContractError("batchnorm: train mode needs a batch of at least 2 rows");
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().mean().matrix();
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * (unbias * var);
  } else {
    mean = state.running_mean.row(0);
    var = state.running_var.row(0);
  }
  const Eigen::RowVectorXd inv_std = (var.array() + state.eps).rsqrt().matrix();
  Matrix xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * gv.row(0).array();
  out.rowwise() += bv.row(0);

  return g.add_node(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, xhat = std::move(xhat), inv_std, mode](Graph& gr, const Matrix& up) {
                      if (gr.requires_grad(beta)) gr.accumulate(beta, up.colwise().sum());
                      if (gr.requires_grad(gamma)) {
                        gr.accumulate(gamma, up.cwiseProduct(xhat).colwise().sum());
                      }
                      if (!gr.requires_grad(x)) return;
                      const Matrix dxhat = up.array().rowwise() * gr.value(gamma).row(0).array();
                      if (mode == Mode::eval) {
                        gr.accumulate(x, dxhat.array().rowwise() * inv_std.array());
                        return;
                      }
                      const double nn = static_cast<double>(up.rows());
                      const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
                      const Eigen::RowVectorXd sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
                      Matrix dx = nn * dxhat;
                      dx.rowwise() -= sum_d;
                      dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
                      dx = dx.array().rowwise() * (inv_std.array() / nn);
                      gr.accumulate(x, dx);
                    });
}

Var dropout(Graph& g, Var x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: p must lie in [0,1)");
  const Matrix& xv = g.value(x);
  if (mode == Mode::eval || p == 0.0) {
    return g.add_node(xv, {x}, [x](Graph& gr, const Matrix& up) { gr.accumulate(x, up); });
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      mask(i, j) = uniform01(rng) < p ? 0.0 : keep_scale;
    }
  }
  Matrix out = xv.cwiseProduct(mask);
  return g.add_node(std::move(out), {x}, [x, mask = std::move(mask)](Graph& gr, const Matrix& up) {
    gr.accumulate(x, up.cwiseProduct(mask));
  });
}

Var grl(Graph& g, Var x, double lambda) {
  return g.add_node(g.value(x), {x}, [x, lambda](Graph& gr, const Matrix& up) {
    gr.accumulate(x, -lambda * up);
  });
}

Var sigmoid(Graph& g, Var x) {
  Matrix out = g.value(x).unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const std::size_t self = g.size();
  return g.add_node(std::move(out), {x}, [x, self](Graph& gr, const Matrix& up) {
    const Matrix& s = gr.value(Var{self});
    gr.accumulate(x, up.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var softmax_rows(Graph& g, Var x) {
  const Matrix& xv = g.value(x);
  Matrix out = xv.colwise() - xv.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  const std::size_t self = g.size();
  return g.add_node(std::move(out), {x}, [x, self](Graph& gr, const Matrix& up) {
    const Matrix& s = gr.value(Var{self});
    const Eigen::VectorXd dot = up.cwiseProduct(s).rowwise().sum();
    Matrix dx = up.colwise() - dot;
    gr.accumulate(x, dx.cwiseProduct(s));
  });
}

Var bce_loss(Graph& g, Var p, std::span<const int> labels, double eps) {
  const Matrix& pv = g.value(p);
  if (pv.cols() != 1) throw DimensionError("bce_loss: probabilities must be n×1, got " + shape_string(pv));
  check_labels(labels, pv.rows(), 2, "bce_loss");
  const double n = static_cast<double>(pv.rows());
  double total = 0.0;
  Matrix dp(pv.rows(), 1);
  for (Eigen::Index i = 0; i < pv.rows(); ++i) {
    const double raw = pv(i, 0);
    const double pc = std::clamp(raw, eps, 1.0 - eps);
    const bool clamped = raw != pc;
    const double y = labels[static_cast<std::size_t>(i)];
    total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    dp(i, 0) = clamped ? 0.0 : (pc - y) / (pc * (1.0 - pc)) / n;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return g.add_node(std::move(out), {p}, [p, dp = std::move(dp)](Graph& gr, const Matrix& up) {
    gr.accumulate(p, up(0, 0) * dp);
  });
}

Var ce_loss(Graph& g, Var probs, std::span<const int> classes, double eps) {
  const Matrix& pv = g.value(probs);
  check_labels(classes, pv.rows(), static_cast<int>(pv.cols()), "ce_loss");
  const double n = static_cast<double>(pv.rows());
  double total = 0.0;
  Matrix dp = Matrix::Zero(pv.rows(), pv.cols());
  for (Eigen::Index i = 0; i < pv.rows(); ++i) {
    const int c = classes[static_cast<std::size_t>(i)];
    const double raw = pv(i, c);
    const double pc = std::max(raw, eps);
    total += -std::log(pc);
    dp(i, c) = raw < eps ? 0.0 : -1.0 / (pc * n);
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return g.add_node(std::move(out), {probs}, [probs, dp = std::move(dp)](Graph& gr, const Matrix& up) {
    gr.accumulate(probs, up(0, 0) * dp);
  });
}

Var add(Graph& g, Var a, Var b) {
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw DimensionError("add: " + shape_string(av) + " vs " + shape_string(bv));
  }
  return g.add_node(av + bv, {a, b}, [a, b](Graph& gr, const Matrix& up) {
    gr.accumulate(a, up);
    gr.accumulate(b, up);
  });
}

Var scale(Graph& g, Var x, double factor) {
  return g.add_node(factor * g.value(x), {x}, [x, factor](Graph& gr, const Matrix& up) {
    gr.accumulate(x, factor * up);
  });
}

Var sum(Graph& g, Var x) {
  Matrix out(1, 1);
  out(0, 0) = g.value(x).sum();
  const Eigen::Index r = g.value(x).rows();
  const Eigen::Index c = g.value(x).cols();
  return g.add_node(std::move(out), {x}, [x, r, c](Graph& gr, const Matrix& up) {
    gr.accumulate(x, Matrix::Constant(r, c, up(0, 0)));
  });
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace advrep::ad
