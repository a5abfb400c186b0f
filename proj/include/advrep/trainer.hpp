#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advrep/dann.hpp"
#include "advrep/data.hpp"

namespace advrep {

struct AdamWConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  double lambda = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 150;
  std::size_t folds = 5;
  std::size_t hidden_dim = 64;
  double dropout_p = 0.1;
  double leaky_slope = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  AdamWConfig adamw() const { return {lr, beta1, beta2, adam_eps, weight_decay}; }
  DannConfig dann(const Dataset& data) const;
};

/// First/second moments per trainable tensor (canonical order) and the step count.
struct OptimizerState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t t = 0;
};

OptimizerState make_optimizer_state(std::span<const NamedTensor> params);

/// One decoupled-weight-decay Adam step using each tensor's accumulated grad:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   m^ = m/(1-b1^t),  v^ = v/(1-b2^t),
///   theta <- theta - lr (m^/(sqrt(v^)+eps) + wd theta).
/// A non-finite gradient throws NumericalError naming the tensor; nothing is updated.
void adamw_step(std::span<const NamedTensor> params, OptimizerState& state, const AdamWConfig& config);

struct BatchLoss {
  ad::Var label_loss;   // mean BCE
  ad::Var domain_loss;  // mean CE
};

/// Both branch losses. They are minimized jointly; the adversarial sign on the
/// feature extractor comes from the gradient reversal inside the graph.
BatchLoss dann_batch_loss(ad::Graph& g, const DannForward& fwd, std::span<const int> labels,
                          std::span<const int> domains);

struct BranchMetrics {
  double label_loss = 0.0;
  double label_acc = 0.0;
  double domain_loss = 0.0;
  double domain_acc = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  BranchMetrics train;
  BranchMetrics val;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// k folds whose validation sets partition all indices, each class spread
/// round-robin so per-fold counts are within one of the proportional share.
std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Single train/test split: round(test_fraction * n_c) shuffled members of
/// each class go to the test side. Both sides are returned sorted.
Fold stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed);

/// One pass over `indices` in shuffled order: train-mode forward, one combined
/// backward of label+domain loss, one AdamW step per batch. Trailing batches
/// of fewer than 2 rows are dropped. Returns sample-weighted means.
BranchMetrics train_epoch(ModelParams& params, OptimizerState& state, const Dataset& data,
                          std::span<const std::size_t> indices, const TrainConfig& config, Rng& rng);

/// Eval-mode losses and accuracies (label threshold 0.5, domain argmax).
BranchMetrics evaluate(const ModelParams& params, const Dataset& data, std::span<const std::size_t> indices);

struct CvResult {
  std::vector<std::vector<EpochRecord>> folds;
  std::vector<EpochRecord> mean;
  std::vector<EpochRecord> stddev;
};

/// Stratified k-fold training from a fresh init per fold.
CvResult run_cv(const Dataset& data, const TrainConfig& config);

struct Snapshot {
  std::size_t epoch = 0;
  std::vector<ActivationMatrix> activations;  // one per capture layer, all samples
};

struct TrainingRecord {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::vector<Snapshot> snapshots;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// 80/20 label-stratified split, training for config.epochs, capturing every
/// capture layer on the full dataset at the end of each snapshot epoch.
TrainingRecord run_training_with_snapshots(const Dataset& data, const TrainConfig& config,
                                           std::span<const std::size_t> snapshot_epochs);

/// Writes epoch,fold,split,label_loss,label_acc,domain_loss,domain_acc.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::vector<EpochRecord>>& folds);

}  // namespace advrep
