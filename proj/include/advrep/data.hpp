#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace advrep {

/// Sample-major expression matrix with a domain id and a binary outcome per row.
struct Dataset {
  Eigen::MatrixXd X;                       // n×d
  std::vector<int> domain;                 // ids in [0, n_domains)
  std::vector<int> label;                  // {0,1}
  std::vector<std::string> feature_names;  // d
  std::vector<std::string> sample_ids;     // n
  std::vector<std::string> domain_names;   // n_domains, index = id
  std::size_t n_domains = 0;

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(X.cols()); }

  /// Throws ContractError when shapes disagree, values are non-finite, an id
  /// is out of range, or a domain/label class has fewer than 2 samples.
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct SynthConfig {
  std::size_t n_per_domain = 200;
  std::size_t n_domains = 6;
  std::size_t n_features = 200;
  std::size_t domain_block = 10;    // features shifted per domain
  std::size_t label_block = 20;     // features shifted by the outcome, shared by all domains
  double domain_effect = 3.0;
  double label_effect = 0.8;
  // sd of a per-domain offset added to every feature (tissue-wide baseline)
  double domain_profile_sd = 0.5;
  std::vector<double> label_rates = {0.3};  // per domain; one value is broadcast
  double noise_sd = 1.0;
  bool disjoint_blocks = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground truth of a synthetic dataset, for scoring attributions.
struct PlantedSignal {
  std::vector<std::size_t> label_features;
  std::vector<std::vector<std::size_t>> domain_features;  // per domain
};

struct SynthData {
  Dataset data;
  PlantedSignal truth;
};

/// Gaussian noise plus a large mean shift on each domain's own feature block
/// and a small label-dependent shift (alternating sign) on one block shared
/// across domains. Each domain gets round(rate·n_per_domain) positives.
SynthData synth_generate(const SynthConfig& config);

/// Reads `sample_id,<features...>` and a labels file with columns sample_id,
/// domain, label. Rows follow the labels file. Domain values are encoded in
/// sorted order (numerically when every value is an integer).
Dataset load_expression_csv(const std::filesystem::path& expression_path, const std::filesystem::path& labels_path);

/// Writes the pair of files read by load_expression_csv.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& expression_path,
                       const std::filesystem::path& labels_path);

/// Sums columns sharing a name; output keeps first-occurrence order.
std::pair<Eigen::MatrixXd, std::vector<std::string>> collapse_duplicate_genes(
    const Eigen::MatrixXd& X, const std::vector<std::string>& feature_names);

/// Elementwise ln(1+x); negative entries raise ContractError.
Eigen::MatrixXd log_transform(const Eigen::MatrixXd& X);

}  // namespace advrep
