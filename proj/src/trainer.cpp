#include "advrep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "advrep/csv.hpp"
#include "advrep/error.hpp"
#include "advrep/rng.hpp"

namespace advrep {

namespace {

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

struct Tally {
  double label_loss = 0.0;
  double domain_loss = 0.0;
  std::size_t label_hits = 0;
  std::size_t domain_hits = 0;
  std::size_t count = 0;

  void add(const Matrix& label_prob, const Matrix& domain_prob, std::span<const int> y, std::span<const int> d,
           double ly, double ld) {
    const auto n = static_cast<std::size_t>(label_prob.rows());
    label_loss += ly * static_cast<double>(n);
    domain_loss += ld * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const int pred = label_prob(r, 0) >= 0.5 ? 1 : 0;
      label_hits += pred == y[i] ? 1 : 0;
      Eigen::Index arg = 0;
      domain_prob.row(r).maxCoeff(&arg);
      domain_hits += static_cast<int>(arg) == d[i] ? 1 : 0;
    }
    count += n;
  }

  BranchMetrics finish() const {
    BranchMetrics m;
    if (count == 0) return m;
    const double n = static_cast<double>(count);
    m.label_loss = label_loss / n;
    m.domain_loss = domain_loss / n;
    m.label_acc = static_cast<double>(label_hits) / n;
    m.domain_acc = static_cast<double>(domain_hits) / n;
    return m;
  }
};

double mean_bce(const Matrix& p, std::span<const int> y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double pc = std::clamp(p(i, 0), ad::kProbEps, 1.0 - ad::kProbEps);
    const double yi = y[static_cast<std::size_t>(i)];
    total += -(yi * std::log(pc) + (1.0 - yi) * std::log(1.0 - pc));
  }
  return total / static_cast<double>(p.rows());
}

double mean_ce(const Matrix& p, std::span<const int> d) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) total += -std::log(std::max(p(i, d[static_cast<std::size_t>(i)]), ad::kProbEps));
  return total / static_cast<double>(p.rows());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ContractError("train: lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("train: betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw ContractError("train: adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ContractError("train: weight_decay must be non-negative");
  if (!(lambda >= 0.0)) throw ContractError("train: lambda must be non-negative");
  if (batch_size < 2) throw ContractError("train: batch_size must be at least 2");
  if (epochs < 1) throw ContractError("train: epochs must be at least 1");
}

DannConfig TrainConfig::dann(const Dataset& data) const {
  DannConfig c;
  c.input_dim = data.n_features();
  c.hidden_dim = hidden_dim;
  c.n_domains = data.n_domains;
  c.dropout_p = dropout_p;
  c.leaky_slope = leaky_slope;
  c.lambda = lambda;
  return c;
}

OptimizerState make_optimizer_state(std::span<const NamedTensor> params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
    s.v.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
  }
  return s;
}

void adamw_step(std::span<const NamedTensor> params, OptimizerState& state, const AdamWConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw_step: optimizer state does not mirror the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Tensor& p = *params[i].tensor;
    if (p.grad.rows() != p.rows() || p.grad.cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols()) {
      throw DimensionError("adamw_step: gradient or moment shape mismatch for " + params[i].name);
    }
    if (!p.grad.allFinite()) throw NumericalError("adamw_step: non-finite gradient in " + params[i].name);
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& p = *params[i].tensor;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = config.beta1 * m + (1.0 - config.beta1) * p.grad;
    v = config.beta2 * v + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    const Matrix adaptive = m_hat.array() / (v_hat.array().sqrt() + config.eps);
    p.value = p.value - config.lr * (adaptive + config.weight_decay * p.value);
  }
}

BatchLoss dann_batch_loss(ad::Graph& g, const DannForward& fwd, std::span<const int> labels,
                          std::span<const int> domains) {
  return BatchLoss{ad::bce_loss(g, fwd.label_prob, labels), ad::ce_loss(g, fwd.domain_prob, domains)};
}

std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("stratified_kfold: k must be at least 2");
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  Rng rng(derive_seed(seed, 0x5f01d));
  std::vector<std::vector<std::size_t>> val(k);
  std::size_t offset = 0;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.size() < k) {
      throw ContractError("stratified_kfold: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " samples, fewer than k=" + std::to_string(k));
    }
    std::shuffle(members.begin(), members.end(), rng);
    // continue the round-robin where the previous class stopped so fold sizes stay balanced
    for (std::size_t j = 0; j < members.size(); ++j) val[(offset + j) % k].push_back(members[j]);
    offset = (offset + members.size()) % k;
  }

  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(val[f].begin(), val[f].end());
    folds[f].val = val[f];
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), val[g].begin(), val[g].end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

Fold stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("stratified_split: test_fraction must lie in (0,1)");
  }
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  Rng rng(derive_seed(seed, 0x5b117));
  Fold out;
  for (int c : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(members.size())));
    out.val.insert(out.val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

BranchMetrics train_epoch(ModelParams& params, OptimizerState& state, const Dataset& data,
                          std::span<const std::size_t> indices, const TrainConfig& config, Rng& rng) {
  if (indices.empty()) throw ContractError("train_epoch: no training indices");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::shuffle(order.begin(), order.end(), rng);

  auto trainable = params.trainable();
  const AdamWConfig opt = config.adamw();
  Tally tally;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    if (end - start < 2) break;
    std::span<const std::size_t> batch(order.data() + start, end - start);
    const std::vector<int> y = gather(data.label, batch);
    const std::vector<int> d = gather(data.domain, batch);

    params.zero_grad();
    ad::Graph g;
    ad::Var x = g.constant(gather_rows(data.X, batch));
    DannForward fwd = forward_full(params, g, x, Mode::train, config.lambda, rng);
    BatchLoss loss = dann_batch_loss(g, fwd, y, d);
    const double ly = g.value(loss.label_loss)(0, 0);
    const double ld = g.value(loss.domain_loss)(0, 0);
    if (!std::isfinite(ly) || !std::isfinite(ld)) throw NumericalError("train_epoch: non-finite loss");
    g.backward(ad::add(g, loss.label_loss, loss.domain_loss));
    adamw_step(trainable, state, opt);
    tally.add(g.value(fwd.label_prob), g.value(fwd.domain_prob), y, d, ly, ld);
  }
  return tally.finish();
}

BranchMetrics evaluate(const ModelParams& params, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) return {};
  const std::vector<int> y = gather(data.label, indices);
  const std::vector<int> d = gather(data.domain, indices);
  const Prediction pred = predict(params, gather_rows(data.X, indices));
  Tally tally;
  tally.add(pred.label_prob, pred.domain_prob, y, d, mean_bce(pred.label_prob, y), mean_ce(pred.domain_prob, d));
  return tally.finish();
}

namespace {

std::vector<EpochRecord> train_fold(const Dataset& data, const TrainConfig& config, const Fold& fold,
                                    std::uint64_t stream, ModelParams* final_params,
                                    std::span<const std::size_t> snapshot_epochs, std::vector<Snapshot>* snapshots) {
  Rng rng(derive_seed(config.seed, stream));
  ModelParams params = init_params(config.dann(data), rng);
  OptimizerState state = make_optimizer_state(params.trainable());
  std::vector<EpochRecord> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = train_epoch(params, state, data, fold.train, config, rng);
    rec.val = evaluate(params, data, fold.val);
    history.push_back(rec);
    if (snapshots != nullptr &&
        std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
      snapshots->push_back(Snapshot{epoch, capture_activations(params, data.X, kCaptureLayers, epoch)});
    }
  }
  if (final_params != nullptr) *final_params = std::move(params);
  return history;
}

BranchMetrics combine(const std::vector<BranchMetrics>& xs, bool stddev) {
  auto stat = [&](auto member) {
    double mean = 0.0;
    for (const auto& x : xs) mean += x.*member;
    mean /= static_cast<double>(xs.size());
    if (!stddev) return mean;
    double ss = 0.0;
    for (const auto& x : xs) ss += (x.*member - mean) * (x.*member - mean);
    return std::sqrt(ss / static_cast<double>(xs.size()));
  };
  BranchMetrics out;
  out.label_loss = stat(&BranchMetrics::label_loss);
  out.label_acc = stat(&BranchMetrics::label_acc);
  out.domain_loss = stat(&BranchMetrics::domain_loss);
  out.domain_acc = stat(&BranchMetrics::domain_acc);
  return out;
}

}  // namespace

CvResult run_cv(const Dataset& data, const TrainConfig& config) {
  config.validate();
  data.validate();
  if (config.folds < 2) throw ContractError("run_cv: folds must be at least 2");
  const auto folds = stratified_kfold(data.label, config.folds, config.seed);
  CvResult result;
  result.folds.resize(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    result.folds[f] = train_fold(data, config, folds[f], 1000 + f, nullptr, {}, nullptr);
  }
  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::vector<BranchMetrics> tr, va;
    for (const auto& f : result.folds) {
      tr.push_back(f[e].train);
      va.push_back(f[e].val);
    }
    result.mean.push_back(EpochRecord{e + 1, combine(tr, false), combine(va, false)});
    result.stddev.push_back(EpochRecord{e + 1, combine(tr, true), combine(va, true)});
  }
  return result;
}

TrainingRecord run_training_with_snapshots(const Dataset& data, const TrainConfig& config,
                                           std::span<const std::size_t> snapshot_epochs) {
  config.validate();
  data.validate();
  for (std::size_t e : snapshot_epochs) {
    if (e < 1 || e > config.epochs) {
      throw ContractError("snapshot epoch " + std::to_string(e) + " outside [1, " + std::to_string(config.epochs) + "]");
    }
  }
  // fold 0 of a 5-fold split is the 20% validation set
  const auto folds = stratified_kfold(data.label, 5, config.seed);
  TrainingRecord record;
  record.train_indices = folds[0].train;
  record.val_indices = folds[0].val;
  record.history = train_fold(data, config, folds[0], 1, &record.params, snapshot_epochs, &record.snapshots);
  return record;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::vector<EpochRecord>>& folds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,fold,split,label_loss,label_acc,domain_loss,domain_acc\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (const auto& rec : folds[f]) {
      for (int s = 0; s < 2; ++s) {
        const BranchMetrics& m = s == 0 ? rec.train : rec.val;
        out << rec.epoch << ',' << f << ',' << (s == 0 ? "train" : "val") << ',' << csv::format_double(m.label_loss)
            << ',' << csv::format_double(m.label_acc) << ',' << csv::format_double(m.domain_loss) << ','
            << csv::format_double(m.domain_acc) << '\n';
      }
    }
  }
}

}  // namespace advrep
