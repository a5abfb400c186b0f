#pragma once

// Three-branch domain-adversarial network: a shared feature extractor feeding
// a label predictor and, through a gradient reversal layer, a domain
// classifier. Parameter and layer names follow the module paths
// `feature_extractor.*`, `label_predictor.*`, `domain_classifier.*`; they are
// the keys of the checkpoint format.

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "advrep/autodiff.hpp"

namespace advrep {

using ad::Matrix;
using ad::Mode;
using ad::Rng;

struct DannConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t n_domains = 2;
  double dropout_p = 0.1;
  double leaky_slope = 0.01;
  double lambda = 0.01;

  void validate() const;
};

/// Hidden layers whose outputs can be captured for analysis.
enum class LayerId { feature_extractor_dropout1, label_predictor_dropout2, domain_classifier_dropout2 };

inline constexpr std::array<LayerId, 3> kCaptureLayers = {
    LayerId::feature_extractor_dropout1, LayerId::label_predictor_dropout2,
    LayerId::domain_classifier_dropout2};

std::string_view layer_name(LayerId id);
/// Inverse of layer_name; throws ContractError listing the valid ids.
LayerId parse_layer(std::string_view name);

struct LinearParams {
  ad::Tensor weight;  // in×out
  ad::Tensor bias;    // 1×out
};

struct BatchNormParams {
  ad::Tensor gamma;  // checkpoint key "weight"
  ad::Tensor beta;   // checkpoint key "bias"
  ad::BatchNormState state;
};

struct FeatureExtractorParams {
  LinearParams fc1;
  BatchNormParams bn1;
};

struct HeadParams {
  LinearParams fc1;
  BatchNormParams bn1;
  LinearParams fc2;
  BatchNormParams bn2;
  LinearParams fc3;
};

struct NamedTensor {
  std::string name;
  ad::Tensor* tensor;
};

struct NamedBuffer {
  std::string name;
  Matrix* buffer;
};

struct ModelParams {
  DannConfig config;
  FeatureExtractorParams feature_extractor;
  HeadParams label_predictor;
  HeadParams domain_classifier;

  /// Trainable tensors in canonical order (the order AdamW state mirrors).
  std::vector<NamedTensor> trainable();
  /// Batch-norm running statistics in canonical order.
  std::vector<NamedBuffer> buffers();
  void zero_grad();
};

/// He-normal weights (variance 2/fan_in), zero biases, gamma=1, beta=0,
/// running mean 0 and running variance 1.
ModelParams init_params(const DannConfig& config, Rng& rng);

struct ActivationMatrix {
  LayerId layer;
  Matrix values;  // n×hidden_dim
  std::size_t epoch = 0;
};

/// Graph handles produced by one forward pass.
struct DannForward {
  ad::Var label_prob;   // n×1
  ad::Var domain_prob;  // n×K
  ad::Var label_logit;
  ad::Var domain_logits;
  ad::Var features;      // feature_extractor.dropout1 block output
  ad::Var label_hidden;  // label_predictor.dropout2 block output
  ad::Var domain_hidden; // domain_classifier.dropout2 block output

  ad::Var layer(LayerId id) const;
};

/// Builds the full forward graph on `x`. Each block is fc -> bn -> dropout ->
/// LeakyReLU; captured activations are block outputs, i.e. exactly what the
/// next layer consumes. `lambda` only affects the backward pass.
DannForward forward_full(ModelParams& params, ad::Graph& g, ad::Var x, Mode mode, double lambda, Rng& rng);

struct Prediction {
  Matrix label_prob;   // n×1
  Matrix domain_prob;  // n×K
};

/// Eval-mode forward without gradient bookkeeping.
Prediction predict(const ModelParams& params, const Matrix& x);

/// Eval-mode label probability per row, for attribution engines.
Eigen::VectorXd predict_label(const ModelParams& params, const Matrix& x);

/// Gradient of the label probability of each row w.r.t. that row's input.
Matrix label_input_gradient(const ModelParams& params, const Matrix& x);

/// Eval-mode capture of the requested layers over all rows of `x`, processed
/// in fixed-size batches in row order.
std::vector<ActivationMatrix> capture_activations(const ModelParams& params, const Matrix& x,
                                                  std::span<const LayerId> layers, std::size_t epoch = 0);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace advrep
