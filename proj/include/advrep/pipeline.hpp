#pragma once

// Stage orchestration over a run directory. Every stage reads its inputs
// from disk and writes its outputs there, so stages can be rerun in
// isolation; one seed fixes every byte of every artifact.
//
// Layout under the run directory:
//   data/expression.csv, data/labels.csv, data/truth.json (synthetic only)
//   model/checkpoint.json, model/metrics.csv, model/split.json
//   snapshots/epoch_<E>/<layer>.csv
//   attributions/epoch_<E>/<layer>.{csv,json}, attributions/vanilla.{csv,json}
//   embeddings/{input,vanilla}.csv, embeddings/<activation|shap>/epoch_<E>/<layer>.csv
//   scores/scores.csv
//   clusters/clusters.csv, clusters/leiden.json
//   stratify/metrics.json, stratify/drivers.csv, stratify/attributions.{csv,json}
//   report/report.json, report/figures.json

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advrep/attribution.hpp"
#include "advrep/data.hpp"
#include "advrep/manifold.hpp"
#include "advrep/surrogate.hpp"
#include "advrep/trainer.hpp"

namespace advrep {

struct DataSource {
  bool synthetic = true;
  SynthConfig synth;
  std::filesystem::path expression_csv;
  std::filesystem::path labels_csv;
  bool collapse_duplicates = true;
  bool log_transform = true;
};

struct AttributionSettings {
  std::size_t n_coalitions = 256;
  VanillaMethod vanilla_method = VanillaMethod::kernel_shap;
  std::size_t vanilla_budget = 512;  // coalitions, or IG steps
  std::size_t background_size = 50;
  GbtConfig surrogate;
};

struct ManifoldSettings {
  UmapConfig umap;
  std::size_t pca_dims = 50;  // inputs wider than this are reduced first
  double lowess_frac = 0.3;
  std::vector<LayerId> layers = {kCaptureLayers.begin(), kCaptureLayers.end()};
};

struct LeidenSettings {
  std::size_t n_neighbors = 30;  // capped at n/4
  double resolution = 0.3;
  LayerId layer = LayerId::feature_extractor_dropout1;
};

struct StratifySettings {
  double test_fraction = 0.3;
  std::size_t top_k = 10;
  std::size_t n_coalitions = 512;
  std::size_t control_repeats = 5;
  GbtConfig classifier;
};

/// Snapshot schedule used when the config names none.
inline constexpr std::array<std::size_t, 8> kDefaultSnapshotEpochs = {1, 5, 10, 50, 70, 100, 300, 499};

struct PipelineConfig {
  std::uint64_t seed = 0;
  DataSource data;
  TrainConfig train;
  bool cross_validate = false;
  std::vector<std::size_t> snapshot_epochs;  // empty: default schedule clipped to train.epochs
  AttributionSettings attribution;
  ManifoldSettings manifold;
  LeidenSettings leiden;
  StratifySettings stratify;

  /// Snapshot epochs in ascending order; always contains train.epochs.
  std::vector<std::size_t> snapshots() const;
  void validate() const;
};

/// Parses a JSON config. Unknown keys, wrong types and out-of-range values
/// raise ContractError; the seed override (from the command line) replaces
/// the config's seed. Component seeds are derived from the global seed.
PipelineConfig load_pipeline_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = {});
PipelineConfig parse_pipeline_config(std::string_view json_text, std::optional<std::uint64_t> seed = {});

/// Effective configuration (all defaults filled in) as JSON text.
std::string config_to_json(const PipelineConfig& config);

enum class Stage { synth, train, attribute, embed, score, leiden, stratify, report };

std::string_view stage_name(Stage stage);
/// Throws ContractError listing the valid stage names.
Stage parse_stage(std::string_view name);

/// Runs one stage. A missing upstream artifact raises MissingArtifactError
/// naming the command that produces it.
void run_stage(Stage stage, const PipelineConfig& config, const std::filesystem::path& run_dir);

}  // namespace advrep
