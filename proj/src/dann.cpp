#include "advrep/dann.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "advrep/error.hpp"

namespace advrep {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr std::string_view kCheckpointFormat = "advrep-dann-checkpoint";
constexpr std::size_t kCaptureBatch = 256;

LinearParams make_linear(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  Matrix w(in, out);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  }
  return LinearParams{ad::Tensor(std::move(w)), ad::Tensor(Matrix::Zero(1, out))};
}

BatchNormParams make_batchnorm(std::size_t width) {
  BatchNormParams bn{ad::Tensor(Matrix::Ones(1, width)), ad::Tensor(Matrix::Zero(1, width)), {}};
  bn.state.running_mean = Matrix::Zero(1, width);
  bn.state.running_var = Matrix::Ones(1, width);
  return bn;
}

HeadParams make_head(std::size_t hidden, std::size_t out, Rng& rng) {
  HeadParams head;
  head.fc1 = make_linear(hidden, hidden, rng);
  head.bn1 = make_batchnorm(hidden);
  head.fc2 = make_linear(hidden, hidden, rng);
  head.bn2 = make_batchnorm(hidden);
  head.fc3 = make_linear(hidden, out, rng);
  return head;
}

void append_linear(std::vector<NamedTensor>& out, const std::string& prefix, LinearParams& p) {
  out.push_back({prefix + ".weight", &p.weight});
  out.push_back({prefix + ".bias", &p.bias});
}

void append_bn(std::vector<NamedTensor>& out, const std::string& prefix, BatchNormParams& p) {
  out.push_back({prefix + ".weight", &p.gamma});
  out.push_back({prefix + ".bias", &p.beta});
}

void append_head(std::vector<NamedTensor>& out, const std::string& prefix, HeadParams& h) {
  append_linear(out, prefix + ".fc1", h.fc1);
  append_bn(out, prefix + ".bn1", h.bn1);
  append_linear(out, prefix + ".fc2", h.fc2);
  append_bn(out, prefix + ".bn2", h.bn2);
  append_linear(out, prefix + ".fc3", h.fc3);
}

ad::Var block(ad::Graph& g, ad::Var x, LinearParams& fc, BatchNormParams& bn, Mode mode, double p,
              double slope, Rng& rng) {
  ad::Var h = ad::linear(g, x, g.parameter(fc.weight), g.parameter(fc.bias));
  h = ad::batchnorm(g, h, g.parameter(bn.gamma), g.parameter(bn.beta), bn.state, mode);
  h = ad::dropout(g, h, p, mode, rng);
  return ad::leaky_relu(g, h, slope);
}

// Plain eval-mode evaluation, mirroring block() without a graph.
Matrix eval_block(const Matrix& x, const LinearParams& fc, const BatchNormParams& bn, double slope) {
  Matrix h = x * fc.weight.value;
  h.rowwise() += fc.bias.value.row(0);
  const Eigen::RowVectorXd inv_std = (bn.state.running_var.array() + bn.state.eps).rsqrt().matrix();
  h.rowwise() -= bn.state.running_mean.row(0);
  h = h.array().rowwise() * inv_std.array();
  h = h.array().rowwise() * bn.gamma.value.row(0).array();
  h.rowwise() += bn.beta.value.row(0);
  return h.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Matrix eval_linear(const Matrix& x, const LinearParams& fc) {
  Matrix h = x * fc.weight.value;
  h.rowwise() += fc.bias.value.row(0);
  return h;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    std::ostringstream msg;
    msg << "checkpoint: tensor " << name << " has wrong shape, expected " << rows << "x" << cols;
    throw ParseError(msg.str());
  }
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: tensor " + name + " has wrong element count");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
  }
  return m;
}

}  // namespace

void DannConfig::validate() const {
  if (input_dim < 1) throw ContractError("DannConfig: input_dim must be at least 1");
  if (hidden_dim < 1) throw ContractError("DannConfig: hidden_dim must be at least 1");
  if (n_domains < 2) throw ContractError("DannConfig: n_domains must be at least 2");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ContractError("DannConfig: dropout_p must lie in [0,1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ContractError("DannConfig: leaky_slope must lie in (0,1)");
  if (!(lambda >= 0.0)) throw ContractError("DannConfig: lambda must be non-negative");
}

std::string_view layer_name(LayerId id) {
  switch (id) {
    case LayerId::feature_extractor_dropout1:
      return "feature_extractor.dropout1";
    case LayerId::label_predictor_dropout2:
      return "label_predictor.dropout2";
    case LayerId::domain_classifier_dropout2:
      return "domain_classifier.dropout2";
  }
  return "unknown";
}

LayerId parse_layer(std::string_view name) {
  for (LayerId id : kCaptureLayers) {
    if (layer_name(id) == name) return id;
  }
  std::string valid;
  for (LayerId id : kCaptureLayers) {
    if (!valid.empty()) valid += ", ";
    valid += layer_name(id);
  }
  throw ContractError("unknown layer id '" + std::string(name) + "'; valid ids: " + valid);
}

std::vector<NamedTensor> ModelParams::trainable() {
  std::vector<NamedTensor> out;
  append_linear(out, "feature_extractor.fc1", feature_extractor.fc1);
  append_bn(out, "feature_extractor.bn1", feature_extractor.bn1);
  append_head(out, "label_predictor", label_predictor);
  append_head(out, "domain_classifier", domain_classifier);
  return out;
}

std::vector<NamedBuffer> ModelParams::buffers() {
  std::vector<NamedBuffer> out;
  auto add = [&out](const std::string& prefix, BatchNormParams& bn) {
    out.push_back({prefix + ".running_mean", &bn.state.running_mean});
    out.push_back({prefix + ".running_var", &bn.state.running_var});
  };
  add("feature_extractor.bn1", feature_extractor.bn1);
  add("label_predictor.bn1", label_predictor.bn1);
  add("label_predictor.bn2", label_predictor.bn2);
  add("domain_classifier.bn1", domain_classifier.bn1);
  add("domain_classifier.bn2", domain_classifier.bn2);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& p : trainable()) p.tensor->zero_grad();
}

ModelParams init_params(const DannConfig& config, Rng& rng) {
  config.validate();
  ModelParams params;
  params.config = config;
  params.feature_extractor.fc1 = make_linear(config.input_dim, config.hidden_dim, rng);
  params.feature_extractor.bn1 = make_batchnorm(config.hidden_dim);
  params.label_predictor = make_head(config.hidden_dim, 1, rng);
  params.domain_classifier = make_head(config.hidden_dim, config.n_domains, rng);
  return params;
}

ad::Var DannForward::layer(LayerId id) const {
  switch (id) {
    case LayerId::feature_extractor_dropout1:
      return features;
    case LayerId::label_predictor_dropout2:
      return label_hidden;
    case LayerId::domain_classifier_dropout2:
      return domain_hidden;
  }
  return features;
}

DannForward forward_full(ModelParams& params, ad::Graph& g, ad::Var x, Mode mode, double lambda, Rng& rng) {
  const auto& cfg = params.config;
  if (static_cast<std::size_t>(g.value(x).cols()) != cfg.input_dim) {
    throw DimensionError("forward: input " + ad::shape_string(g.value(x)) + " but model expects " +
                         std::to_string(cfg.input_dim) + " features");
  }
  const double p = cfg.dropout_p;
  const double slope = cfg.leaky_slope;
  DannForward out;

  auto& fe = params.feature_extractor;
  out.features = block(g, x, fe.fc1, fe.bn1, mode, p, slope, rng);

  auto& lp = params.label_predictor;
  ad::Var h = block(g, out.features, lp.fc1, lp.bn1, mode, p, slope, rng);
  out.label_hidden = block(g, h, lp.fc2, lp.bn2, mode, p, slope, rng);
  out.label_logit = ad::linear(g, out.label_hidden, g.parameter(lp.fc3.weight), g.parameter(lp.fc3.bias));
  out.label_prob = ad::sigmoid(g, out.label_logit);

  auto& dc = params.domain_classifier;
  ad::Var reversed = ad::grl(g, out.features, lambda);
  h = block(g, reversed, dc.fc1, dc.bn1, mode, p, slope, rng);
  out.domain_hidden = block(g, h, dc.fc2, dc.bn2, mode, p, slope, rng);
  out.domain_logits = ad::linear(g, out.domain_hidden, g.parameter(dc.fc3.weight), g.parameter(dc.fc3.bias));
  out.domain_prob = ad::softmax_rows(g, out.domain_logits);
  return out;
}

Prediction predict(const ModelParams& params, const Matrix& x) {
  const auto& cfg = params.config;
  if (static_cast<std::size_t>(x.cols()) != cfg.input_dim) {
    throw DimensionError("predict: input " + ad::shape_string(x) + " but model expects " +
                         std::to_string(cfg.input_dim) + " features");
  }
  const double slope = cfg.leaky_slope;
  const Matrix features = eval_block(x, params.feature_extractor.fc1, params.feature_extractor.bn1, slope);

  const auto& lp = params.label_predictor;
  Matrix h = eval_block(eval_block(features, lp.fc1, lp.bn1, slope), lp.fc2, lp.bn2, slope);
  Matrix logit = eval_linear(h, lp.fc3);

  const auto& dc = params.domain_classifier;
  h = eval_block(eval_block(features, dc.fc1, dc.bn1, slope), dc.fc2, dc.bn2, slope);
  Matrix logits = eval_linear(h, dc.fc3);

  Prediction pred;
  pred.label_prob = logit.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  logits = logits.colwise() - logits.rowwise().maxCoeff();
  pred.domain_prob = logits.array().exp();
  pred.domain_prob.array().colwise() /= pred.domain_prob.rowwise().sum().array();
  return pred;
}

Eigen::VectorXd predict_label(const ModelParams& params, const Matrix& x) {
  return predict(params, x).label_prob.col(0);
}

Matrix label_input_gradient(const ModelParams& params, const Matrix& x) {
  ModelParams local = params;
  ad::Graph g;
  ad::Var in = g.input(x);
  Rng unused(0);
  DannForward fwd = forward_full(local, g, in, Mode::eval, local.config.lambda, unused);
  // eval-mode rows are independent, so d(sum)/dx_i = d p_i / dx_i
  g.backward(ad::sum(g, fwd.label_prob));
  return g.grad(in);
}

std::vector<ActivationMatrix> capture_activations(const ModelParams& params, const Matrix& x,
                                                  std::span<const LayerId> layers, std::size_t epoch) {
  ModelParams local = params;
  const Eigen::Index n = x.rows();
  const Eigen::Index hidden = static_cast<Eigen::Index>(local.config.hidden_dim);
  std::vector<ActivationMatrix> out;
  for (LayerId id : layers) out.push_back(ActivationMatrix{id, Matrix(n, hidden), epoch});
  Rng unused(0);
  for (Eigen::Index start = 0; start < n; start += static_cast<Eigen::Index>(kCaptureBatch)) {
    const Eigen::Index rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(kCaptureBatch), n - start);
    ad::Graph g;
    ad::Var in = g.constant(x.middleRows(start, rows));
    DannForward fwd = forward_full(local, g, in, Mode::eval, local.config.lambda, unused);
    for (std::size_t k = 0; k < layers.size(); ++k) {
      out[k].values.middleRows(start, rows) = g.value(fwd.layer(layers[k]));
    }
  }
  return out;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  ModelParams p = params;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& t : p.trainable()) tensors[t.name] = matrix_to_json(t.tensor->value);
  for (const auto& b : p.buffers()) tensors[b.name] = matrix_to_json(*b.buffer);
  const auto& c = params.config;
  nlohmann::json doc = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"config",
       {{"input_dim", c.input_dim},
        {"hidden_dim", c.hidden_dim},
        {"n_domains", c.n_domains},
        {"dropout_p", c.dropout_p},
        {"leaky_slope", c.leaky_slope},
        {"lambda", c.lambda}}},
      {"tensors", std::move(tensors)},
  };
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << doc.dump(1) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("checkpoint not found: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) throw ParseError("checkpoint: unknown format");
    if (doc.at("version").get<int>() != kCheckpointVersion) throw ParseError("checkpoint: unsupported version");
    const auto& c = doc.at("config");
    DannConfig config;
    config.input_dim = c.at("input_dim").get<std::size_t>();
    config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    config.n_domains = c.at("n_domains").get<std::size_t>();
    config.dropout_p = c.at("dropout_p").get<double>();
    config.leaky_slope = c.at("leaky_slope").get<double>();
    config.lambda = c.at("lambda").get<double>();
    Rng rng(0);
    ModelParams params = init_params(config, rng);
    const auto& tensors = doc.at("tensors");
    for (auto& t : params.trainable()) {
      t.tensor->value = matrix_from_json(tensors.at(t.name), t.name, t.tensor->rows(), t.tensor->cols());
      t.tensor->zero_grad();
    }
    for (auto& b : params.buffers()) {
      *b.buffer = matrix_from_json(tensors.at(b.name), b.name, b.buffer->rows(), b.buffer->cols());
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace advrep
