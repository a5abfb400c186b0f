#include "advrep/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advrep/csv.hpp"
#include "advrep/error.hpp"
#include "advrep/graph.hpp"
#include "advrep/rng.hpp"
#include "advrep/scoring.hpp"
#include "advrep/shapley.hpp"

namespace advrep {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Streams under the global seed.
enum SeedStream : std::uint64_t {
  kSynthStream = 1,
  kTrainStream = 2,
  kAttributionStream = 3,
  kEmbedStream = 4,
  kLeidenStream = 5,
  kStratifyStream = 6,
};

constexpr std::string_view kStageNames[] = {"synth", "train", "attribute", "embed",
                                            "score", "leiden", "stratify", "report"};

// ---- config parsing --------------------------------------------------------

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ContractError("config: '" + display() + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw wrong(key, "a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw wrong(key, "an integer");
      if (std::is_unsigned_v<T> && !it->is_number_unsigned()) throw wrong(key, "a non-negative integer");
      out = it->template get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw wrong(key, "a number");
      out = it->template get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw wrong(key, "a string");
      out = it->template get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), full(key));
  }

  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ContractError("config: unknown key '" + full(it.key()) + "'");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  ContractError wrong(const std::string& key, const char* what) const {
    return ContractError("config: '" + full(key) + "' must be " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_gbt(Section s, GbtConfig& g) {
  s.read("n_rounds", g.n_rounds);
  s.read("max_depth", g.max_depth);
  s.read("learning_rate", g.learning_rate);
  s.read("min_samples_leaf", g.min_samples_leaf);
  s.read("subsample", g.subsample);
  s.finish();
}

std::vector<std::size_t> read_counts(const json& j, const std::string& where) {
  if (!j.is_array()) throw ContractError("config: '" + where + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_unsigned()) throw ContractError("config: '" + where + "' must hold non-negative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

std::vector<LayerId> read_layers(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ContractError("config: '" + where + "' must be a non-empty array");
  std::vector<LayerId> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ContractError("config: '" + where + "' must hold layer names");
    const LayerId id = parse_layer(v.get<std::string>());
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  }
  return out;
}

PipelineConfig parse_document(const json& doc, const fs::path& base_dir, std::optional<std::uint64_t> seed) {
  PipelineConfig c;
  Section root(doc, "");
  bool has_seed = root.has("seed");
  root.read("seed", c.seed);
  if (seed) {
    c.seed = *seed;
    has_seed = true;
  }
  if (!has_seed) throw ContractError("config: 'seed' is required (or pass --seed)");

  if (root.has("data")) {
    Section data = root.child("data");
    if (data.has("synth") && (data.has("expression_csv") || data.has("labels_csv"))) {
      throw ContractError("config: 'data' must name either 'synth' or the CSV pair, not both");
    }
    if (data.has("expression_csv") || data.has("labels_csv")) {
      c.data.synthetic = false;
      std::string expr, labels;
      data.read("expression_csv", expr);
      data.read("labels_csv", labels);
      if (expr.empty() || labels.empty()) {
        throw ContractError("config: 'data.expression_csv' and 'data.labels_csv' must both be given");
      }
      c.data.expression_csv = fs::path(expr).is_absolute() ? fs::path(expr) : base_dir / expr;
      c.data.labels_csv = fs::path(labels).is_absolute() ? fs::path(labels) : base_dir / labels;
      data.read("collapse_duplicates", c.data.collapse_duplicates);
      data.read("log_transform", c.data.log_transform);
    } else if (data.has("synth")) {
      Section s = data.child("synth");
      SynthConfig& sc = c.data.synth;
      s.read("n_per_domain", sc.n_per_domain);
      s.read("n_domains", sc.n_domains);
      s.read("n_features", sc.n_features);
      s.read("domain_block", sc.domain_block);
      s.read("label_block", sc.label_block);
      s.read("domain_effect", sc.domain_effect);
      s.read("label_effect", sc.label_effect);
      s.read("domain_profile_sd", sc.domain_profile_sd);
      s.read("noise_sd", sc.noise_sd);
      s.read("disjoint_blocks", sc.disjoint_blocks);
      if (s.has("label_rates")) {
        const json& r = s.raw("label_rates");
        sc.label_rates.clear();
        if (r.is_number()) {
          sc.label_rates.push_back(r.get<double>());
        } else if (r.is_array()) {
          for (const auto& v : r) {
            if (!v.is_number()) throw ContractError("config: 'data.synth.label_rates' must hold numbers");
            sc.label_rates.push_back(v.get<double>());
          }
        } else {
          throw ContractError("config: 'data.synth.label_rates' must be a number or an array");
        }
      }
      s.finish();
    }
    data.finish();
  }

  if (root.has("train")) {
    Section t = root.child("train");
    TrainConfig& tc = c.train;
    t.read("lr", tc.lr);
    t.read("beta1", tc.beta1);
    t.read("beta2", tc.beta2);
    t.read("weight_decay", tc.weight_decay);
    t.read("adam_eps", tc.adam_eps);
    t.read("lambda", tc.lambda);
    t.read("batch_size", tc.batch_size);
    t.read("epochs", tc.epochs);
    t.read("folds", tc.folds);
    t.read("hidden_dim", tc.hidden_dim);
    t.read("dropout_p", tc.dropout_p);
    t.read("leaky_slope", tc.leaky_slope);
    t.read("cross_validate", c.cross_validate);
    if (t.has("snapshot_epochs")) c.snapshot_epochs = read_counts(t.raw("snapshot_epochs"), "train.snapshot_epochs");
    t.finish();
  }

  if (root.has("attribution")) {
    Section a = root.child("attribution");
    a.read("n_coalitions", c.attribution.n_coalitions);
    std::string method = "kernel_shap";
    a.read("vanilla_method", method);
    if (method == "kernel_shap") {
      c.attribution.vanilla_method = VanillaMethod::kernel_shap;
    } else if (method == "integrated_gradients") {
      c.attribution.vanilla_method = VanillaMethod::integrated_gradients;
    } else {
      throw ContractError("config: 'attribution.vanilla_method' must be kernel_shap or integrated_gradients");
    }
    a.read("vanilla_budget", c.attribution.vanilla_budget);
    a.read("background_size", c.attribution.background_size);
    if (a.has("surrogate")) read_gbt(a.child("surrogate"), c.attribution.surrogate);
    a.finish();
  }

  if (root.has("manifold")) {
    Section m = root.child("manifold");
    m.read("n_neighbors", c.manifold.umap.n_neighbors);
    m.read("min_dist", c.manifold.umap.min_dist);
    m.read("spread", c.manifold.umap.spread);
    m.read("epochs", c.manifold.umap.epochs);
    m.read("negative_rate", c.manifold.umap.negative_rate);
    m.read("learning_rate", c.manifold.umap.learning_rate);
    m.read("pca_dims", c.manifold.pca_dims);
    m.read("lowess_frac", c.manifold.lowess_frac);
    if (m.has("layers")) c.manifold.layers = read_layers(m.raw("layers"), "manifold.layers");
    m.finish();
  }

  if (root.has("leiden")) {
    Section l = root.child("leiden");
    l.read("n_neighbors", c.leiden.n_neighbors);
    l.read("resolution", c.leiden.resolution);
    std::string layer(layer_name(c.leiden.layer));
    l.read("layer", layer);
    c.leiden.layer = parse_layer(layer);
    l.finish();
  }

  if (root.has("stratify")) {
    Section s = root.child("stratify");
    s.read("test_fraction", c.stratify.test_fraction);
    s.read("top_k", c.stratify.top_k);
    s.read("n_coalitions", c.stratify.n_coalitions);
    s.read("control_repeats", c.stratify.control_repeats);
    if (s.has("classifier")) read_gbt(s.child("classifier"), c.stratify.classifier);
    s.finish();
  }
  root.finish();

  c.data.synth.seed = derive_seed(c.seed, kSynthStream);
  c.train.seed = derive_seed(c.seed, kTrainStream);
  c.attribution.surrogate.seed = derive_seed(c.seed, kAttributionStream);
  c.manifold.umap.seed = derive_seed(c.seed, kEmbedStream);
  c.stratify.classifier.seed = derive_seed(c.seed, kStratifyStream);
  c.validate();
  return c;
}

ojson gbt_json(const GbtConfig& g) {
  return {{"n_rounds", g.n_rounds},
          {"max_depth", g.max_depth},
          {"learning_rate", g.learning_rate},
          {"min_samples_leaf", g.min_samples_leaf},
          {"subsample", g.subsample}};
}

ojson config_json(const PipelineConfig& c) {
  ojson data;
  if (c.data.synthetic) {
    const SynthConfig& s = c.data.synth;
    data["synth"] = {{"n_per_domain", s.n_per_domain},   {"n_domains", s.n_domains},
                     {"n_features", s.n_features},       {"domain_block", s.domain_block},
                     {"label_block", s.label_block},     {"domain_effect", s.domain_effect},
                     {"label_effect", s.label_effect},   {"domain_profile_sd", s.domain_profile_sd},
                     {"label_rates", s.label_rates},     {"noise_sd", s.noise_sd},
                     {"disjoint_blocks", s.disjoint_blocks}};
  } else {
    data["expression_csv"] = c.data.expression_csv.string();
    data["labels_csv"] = c.data.labels_csv.string();
    data["collapse_duplicates"] = c.data.collapse_duplicates;
    data["log_transform"] = c.data.log_transform;
  }
  const TrainConfig& t = c.train;
  ojson train = {{"lr", t.lr},
                 {"beta1", t.beta1},
                 {"beta2", t.beta2},
                 {"weight_decay", t.weight_decay},
                 {"adam_eps", t.adam_eps},
                 {"lambda", t.lambda},
                 {"batch_size", t.batch_size},
                 {"epochs", t.epochs},
                 {"folds", t.folds},
                 {"hidden_dim", t.hidden_dim},
                 {"dropout_p", t.dropout_p},
                 {"leaky_slope", t.leaky_slope},
                 {"cross_validate", c.cross_validate},
                 {"snapshot_epochs", c.snapshots()}};
  ojson layers = ojson::array();
  for (LayerId id : c.manifold.layers) layers.push_back(std::string(layer_name(id)));
  const UmapConfig& u = c.manifold.umap;
  return {
      {"seed", c.seed},
      {"data", data},
      {"train", train},
      {"attribution",
       {{"n_coalitions", c.attribution.n_coalitions},
        {"vanilla_method", c.attribution.vanilla_method == VanillaMethod::kernel_shap ? "kernel_shap"
                                                                                      : "integrated_gradients"},
        {"vanilla_budget", c.attribution.vanilla_budget},
        {"background_size", c.attribution.background_size},
        {"surrogate", gbt_json(c.attribution.surrogate)}}},
      {"manifold",
       {{"n_neighbors", u.n_neighbors},
        {"min_dist", u.min_dist},
        {"spread", u.spread},
        {"epochs", u.epochs},
        {"negative_rate", u.negative_rate},
        {"learning_rate", u.learning_rate},
        {"pca_dims", c.manifold.pca_dims},
        {"lowess_frac", c.manifold.lowess_frac},
        {"layers", layers}}},
      {"leiden",
       {{"n_neighbors", c.leiden.n_neighbors},
        {"resolution", c.leiden.resolution},
        {"layer", std::string(layer_name(c.leiden.layer))}}},
      {"stratify",
       {{"test_fraction", c.stratify.test_fraction},
        {"top_k", c.stratify.top_k},
        {"n_coalitions", c.stratify.n_coalitions},
        {"control_repeats", c.stratify.control_repeats},
        {"classifier", gbt_json(c.stratify.classifier)}}},
  };
}

// ---- run-directory layout --------------------------------------------------

std::string epoch_dir(std::size_t e) { return "epoch_" + std::to_string(e); }
std::string layer_file(LayerId id, const char* ext = ".csv") { return std::string(layer_name(id)) + ext; }

struct Layout {
  fs::path root;

  fs::path expression() const { return root / "data" / "expression.csv"; }
  fs::path labels() const { return root / "data" / "labels.csv"; }
  fs::path truth() const { return root / "data" / "truth.json"; }
  fs::path checkpoint() const { return root / "model" / "checkpoint.json"; }
  fs::path metrics() const { return root / "model" / "metrics.csv"; }
  fs::path cv_metrics() const { return root / "model" / "cv_metrics.csv"; }
  fs::path split() const { return root / "model" / "split.json"; }
  fs::path snapshot(std::size_t e, LayerId id) const { return root / "snapshots" / epoch_dir(e) / layer_file(id); }
  fs::path attribution(std::size_t e, LayerId id) const {
    return root / "attributions" / epoch_dir(e) / layer_file(id);
  }
  fs::path attribution_meta(std::size_t e, LayerId id) const {
    return root / "attributions" / epoch_dir(e) / layer_file(id, ".json");
  }
  fs::path vanilla() const { return root / "attributions" / "vanilla.csv"; }
  fs::path vanilla_meta() const { return root / "attributions" / "vanilla.json"; }
  fs::path embedding(const std::string& source, std::size_t e, LayerId id) const {
    return root / "embeddings" / source / epoch_dir(e) / layer_file(id);
  }
  fs::path input_embedding() const { return root / "embeddings" / "input.csv"; }
  fs::path vanilla_embedding() const { return root / "embeddings" / "vanilla.csv"; }
  fs::path scores() const { return root / "scores" / "scores.csv"; }
  fs::path clusters() const { return root / "clusters" / "clusters.csv"; }
  fs::path leiden() const { return root / "clusters" / "leiden.json"; }
  fs::path strat_metrics() const { return root / "stratify" / "metrics.json"; }
  fs::path drivers() const { return root / "stratify" / "drivers.csv"; }
  fs::path strat_attr() const { return root / "stratify" / "attributions.csv"; }
  fs::path strat_attr_meta() const { return root / "stratify" / "attributions.json"; }
  fs::path report() const { return root / "report" / "report.json"; }
  fs::path figures() const { return root / "report" / "figures.json"; }

  std::string rel(const fs::path& p) const { return p.lexically_relative(root).generic_string(); }

  void require(const fs::path& p, Stage producer) const {
    if (!fs::exists(p)) {
      throw MissingArtifactError(rel(p) + " not found: run " + std::string(stage_name(producer)) + " first");
    }
  }
};

const char* kSources[] = {"activation", "shap"};

void ensure_parent(const fs::path& p) { fs::create_directories(p.parent_path()); }

void write_json(const fs::path& path, const ojson& doc) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_matrix(const fs::path& path, const std::vector<std::string>& ids, const std::vector<std::string>& cols,
                  const Eigen::MatrixXd& m) {
  ensure_parent(path);
  csv::write_matrix(path, ids, cols, m);
}

std::vector<std::string> numbered(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
    out.emplace_back(buf);
  }
  return out;
}

Dataset load_data(const Layout& L) {
  L.require(L.expression(), Stage::synth);
  L.require(L.labels(), Stage::synth);
  return load_expression_csv(L.expression(), L.labels());
}

Fold read_split(const Layout& L) {
  L.require(L.split(), Stage::train);
  const json j = read_json(L.split());
  Fold f;
  f.train = j.at("train").get<std::vector<std::size_t>>();
  f.val = j.at("val").get<std::vector<std::size_t>>();
  return f;
}

Eigen::MatrixXd read_values(const Layout& L, const fs::path& p, Stage producer, std::size_t expected_rows) {
  L.require(p, producer);
  csv::LabeledMatrix m = csv::read_matrix(p);
  if (static_cast<std::size_t>(m.values.rows()) != expected_rows) {
    throw DimensionError(L.rel(p) + " has " + std::to_string(m.values.rows()) + " rows, dataset has " +
                         std::to_string(expected_rows) + "; rerun " + std::string(stage_name(producer)));
  }
  return std::move(m.values);
}

std::uint64_t job_seed(std::uint64_t base, std::size_t epoch, LayerId layer, std::uint64_t salt) {
  return derive_seed(base, (static_cast<std::uint64_t>(epoch) << 8) ^ (static_cast<std::uint64_t>(layer) << 4) ^ salt);
}

// ---- stages ----------------------------------------------------------------

void stage_synth(const PipelineConfig& c, const Layout& L) {
  fs::create_directories(L.root / "data");
  if (c.data.synthetic) {
    const SynthData sd = synth_generate(c.data.synth);
    write_dataset_csv(sd.data, L.expression(), L.labels());
    ojson names = ojson::array();
    for (std::size_t j : sd.truth.label_features) names.push_back(sd.data.feature_names[j]);
    write_json(L.truth(), {{"label_features", sd.truth.label_features},
                           {"label_feature_names", names},
                           {"domain_features", sd.truth.domain_features}});
    return;
  }
  Dataset d = load_expression_csv(c.data.expression_csv, c.data.labels_csv);
  if (c.data.collapse_duplicates) {
    auto [X, names] = collapse_duplicate_genes(d.X, d.feature_names);
    d.X = std::move(X);
    d.feature_names = std::move(names);
  }
  if (c.data.log_transform) d.X = log_transform(d.X);
  d.validate();
  write_dataset_csv(d, L.expression(), L.labels());
  fs::remove(L.truth());
}

void stage_train(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  const std::vector<std::size_t> snaps = c.snapshots();
  const TrainingRecord rec = run_training_with_snapshots(data, c.train, snaps);
  ensure_parent(L.checkpoint());
  save_checkpoint(rec.params, L.checkpoint());
  write_metrics_csv(L.metrics(), {rec.history});
  write_json(L.split(), {{"train", rec.train_indices}, {"val", rec.val_indices}});
  const auto cols = numbered("h", c.train.hidden_dim);
  for (const Snapshot& s : rec.snapshots) {
    for (const ActivationMatrix& a : s.activations) write_matrix(L.snapshot(s.epoch, a.layer), data.sample_ids, cols, a.values);
  }
  if (c.cross_validate) {
    const CvResult cv = run_cv(data, c.train);
    write_metrics_csv(L.cv_metrics(), cv.folds);
  }
}

void stage_attribute(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  L.require(L.checkpoint(), Stage::train);
  const ModelParams params = load_checkpoint(L.checkpoint());
  const Fold split = read_split(L);
  const std::uint64_t base = c.attribution.surrogate.seed;
  for (std::size_t e : c.snapshots()) {
    for (LayerId id : c.manifold.layers) {
      const Eigen::MatrixXd A = read_values(L, L.snapshot(e, id), Stage::train, data.size());
      GbtConfig g = c.attribution.surrogate;
      g.seed = job_seed(base, e, id, 1);
      const SurrogateModel model = train_surrogate(A, data.label, g);
      const BackgroundSet bg = select_background(A, data.label, split.train, c.attribution.background_size, base);
      AttributionMatrix at = surrogate_attributions(model, A, bg, c.attribution.n_coalitions, job_seed(base, e, id, 2));
      at.sample_ids = data.sample_ids;
      at.feature_names = numbered("h", static_cast<std::size_t>(A.cols()));
      ensure_parent(L.attribution(e, id));
      write_attribution(at, L.attribution(e, id), L.attribution_meta(e, id));
    }
  }
  const BackgroundSet bg = select_background(data.X, data.label, split.train, c.attribution.background_size, base);
  AttributionMatrix va = vanilla_explain(params, data.X, bg, c.attribution.vanilla_method, c.attribution.vanilla_budget,
                                         derive_seed(base, 7));
  va.sample_ids = data.sample_ids;
  va.feature_names = data.feature_names;
  write_attribution(va, L.vanilla(), L.vanilla_meta());
}

Eigen::MatrixXd layout_2d(const PipelineConfig& c, const Eigen::MatrixXd& M, std::uint64_t seed) {
  UmapConfig u = c.manifold.umap;
  u.seed = seed;
  const auto n = static_cast<std::size_t>(M.rows());
  u.n_neighbors = std::min(u.n_neighbors, std::max<std::size_t>(2, n / 4));
  const bool reduce = c.manifold.pca_dims > 0 && static_cast<std::size_t>(M.cols()) > c.manifold.pca_dims;
  return embed_2d(reduce ? pca(M, c.manifold.pca_dims).scores : M, u).coords;
}

void stage_embed(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  const std::vector<std::string> xy = {"x", "y"};
  const std::uint64_t base = c.manifold.umap.seed;
  for (std::size_t e : c.snapshots()) {
    for (LayerId id : c.manifold.layers) {
      const Eigen::MatrixXd act = read_values(L, L.snapshot(e, id), Stage::train, data.size());
      write_matrix(L.embedding("activation", e, id), data.sample_ids, xy, layout_2d(c, act, job_seed(base, e, id, 1)));
      const Eigen::MatrixXd shap = read_values(L, L.attribution(e, id), Stage::attribute, data.size());
      write_matrix(L.embedding("shap", e, id), data.sample_ids, xy, layout_2d(c, shap, job_seed(base, e, id, 2)));
    }
  }
  const Eigen::MatrixXd va = read_values(L, L.vanilla(), Stage::attribute, data.size());
  write_matrix(L.vanilla_embedding(), data.sample_ids, xy, layout_2d(c, va, derive_seed(base, 3)));
  write_matrix(L.input_embedding(), data.sample_ids, xy, layout_2d(c, data.X, derive_seed(base, 4)));
}

void stage_score(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  std::vector<ManifoldInput> inputs;
  for (std::size_t e : c.snapshots()) {
    for (LayerId id : c.manifold.layers) {
      for (const char* source : kSources) {
        inputs.push_back({e, std::string(layer_name(id)), source,
                          read_values(L, L.embedding(source, e, id), Stage::embed, data.size())});
      }
    }
  }
  const auto rows = score_series(inputs, data.label, data.domain, c.manifold.lowess_frac);
  ensure_parent(L.scores());
  write_scores_csv(L.scores(), rows);
}

void stage_leiden(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  const std::size_t e = c.snapshots().back();
  const Eigen::MatrixXd shap = read_values(L, L.attribution(e, c.leiden.layer), Stage::attribute, data.size());
  const std::size_t k = std::min(c.leiden.n_neighbors, std::max<std::size_t>(1, data.size() / 4));
  const KnnGraph g = knn_graph(shap, k);
  const ClusterAssignment cl = leiden(g.graph, c.leiden.resolution, derive_seed(c.seed, kLeidenStream));

  ensure_parent(L.clusters());
  std::ofstream out(L.clusters(), std::ios::binary);
  if (!out) throw Error("cannot write " + L.clusters().string());
  out << "sample_id,cluster\n";
  for (std::size_t i = 0; i < data.size(); ++i) out << data.sample_ids[i] << ',' << cl.membership[i] << '\n';
  out.close();
  write_json(L.leiden(), {{"layer", std::string(layer_name(c.leiden.layer))},
                          {"epoch", e},
                          {"n_neighbors", k},
                          {"resolution", cl.resolution},
                          {"n_clusters", cl.n_clusters},
                          {"quality", cl.quality},
                          {"phase_quality", cl.phase_quality}});
}

std::vector<int> read_clusters(const Layout& L, const Dataset& data) {
  L.require(L.clusters(), Stage::leiden);
  const csv::Table t = csv::read_table(L.clusters());
  if (t.header != std::vector<std::string>{"sample_id", "cluster"} || t.rows.size() != data.size()) {
    throw ParseError(L.rel(L.clusters()) + ": unexpected shape; rerun leiden");
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][0] != data.sample_ids[i]) throw ParseError(L.rel(L.clusters()) + ": sample order differs from data");
    out.push_back(static_cast<int>(csv::parse_double(t.rows[i][1], L.clusters(), t.line_numbers[i], 2)));
  }
  return out;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

template <class T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

void stage_stratify(const PipelineConfig& c, const Layout& L) {
  const Dataset data = load_data(L);
  const std::vector<int> clusters = read_clusters(L, data);
  const StratifySettings& s = c.stratify;
  const Fold split = stratified_split(data.label, s.test_fraction, s.classifier.seed);

  std::set<int> in_train;
  for (std::size_t i : split.train) in_train.insert(clusters[i]);
  std::set<int> all(clusters.begin(), clusters.end());
  std::vector<int> excluded;
  for (int k : all) {
    if (!in_train.count(k)) {
      excluded.push_back(k);
      std::cerr << "warning: cluster " << k << " has no training samples and is excluded\n";
    }
  }
  auto keep = [&](const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    for (std::size_t i : rows) {
      if (in_train.count(clusters[i])) out.push_back(i);
    }
    return out;
  };
  const std::vector<std::size_t> train = keep(split.train);
  const std::vector<std::size_t> test = keep(split.val);
  const std::vector<int> included(in_train.begin(), in_train.end());
  if (included.size() < 2) throw ContractError("stratify: fewer than 2 clusters have training samples");

  const Eigen::MatrixXd X_train = gather_rows(data.X, train);
  const Eigen::MatrixXd X_test = gather_rows(data.X, test);
  const std::vector<int> y_train = gather(clusters, train);
  const std::vector<int> y_test = gather(clusters, test);
  const SurrogateModel model = train_surrogate(X_train, y_train, s.classifier);
  const auto report = classification_report(y_test, model.predict(X_test), included);
  const double f1 = macro_f1(report);

  std::vector<double> control;
  std::mt19937_64 rng(derive_seed(s.classifier.seed, 0xc0));
  for (std::size_t r = 0; r < s.control_repeats; ++r) {
    std::vector<int> shuffled = y_train;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    GbtConfig g = s.classifier;
    g.seed = derive_seed(s.classifier.seed, 100 + r);
    const SurrogateModel ctrl = train_surrogate(X_train, shuffled, g);
    control.push_back(macro_f1(classification_report(y_test, ctrl.predict(X_test), included)));
  }
  double control_mean = 0.0;
  for (double v : control) control_mean += v;
  if (!control.empty()) control_mean /= static_cast<double>(control.size());

  // per-cluster drivers: attributions of each member's own-cluster score
  std::set<std::size_t> planted;
  if (fs::exists(L.truth())) {
    for (std::size_t j : read_json(L.truth()).at("label_features").get<std::vector<std::size_t>>()) planted.insert(j);
  }
  const BackgroundSet bg = select_background(data.X, data.label, split.train, c.attribution.background_size,
                                             s.classifier.seed);
  std::vector<std::size_t> member_rows;
  Eigen::MatrixXd phi(0, data.X.cols());
  ojson drivers = ojson::array();
  std::ostringstream drivers_csv;
  drivers_csv << "cluster,rank,feature,mean_abs_phi\n";
  for (std::size_t slot = 0; slot < model.classes.size(); ++slot) {
    const int k = model.classes[slot];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (clusters[i] == k) rows.push_back(i);
    }
    const AttributionMatrix at = surrogate_attributions(model, gather_rows(data.X, rows), bg, s.n_coalitions,
                                                        derive_seed(s.classifier.seed, 200 + slot), slot);
    const Eigen::VectorXd importance = mean_abs_attribution(at.values);
    ojson features = ojson::array();
    std::size_t rank = 0;
    std::size_t planted_hits = 0;
    for (std::size_t j : top_k(importance, s.top_k)) {
      const bool is_planted = planted.count(j) > 0;
      planted_hits += is_planted ? 1 : 0;
      features.push_back({{"feature", data.feature_names[j]},
                          {"index", j},
                          {"mean_abs_phi", importance(static_cast<Eigen::Index>(j))},
                          {"planted_label_feature", is_planted}});
      drivers_csv << k << ',' << ++rank << ',' << data.feature_names[j] << ','
                  << csv::format_double(importance(static_cast<Eigen::Index>(j))) << '\n';
    }
    std::size_t positives = 0;
    for (std::size_t i : rows) positives += data.label[i] == 1 ? 1 : 0;
    drivers.push_back({{"cluster", k},
                       {"size", rows.size()},
                       {"label_rate", static_cast<double>(positives) / static_cast<double>(rows.size())},
                       {"planted_in_top_k", planted_hits},
                       {"features", features}});
    member_rows.insert(member_rows.end(), rows.begin(), rows.end());
    phi.conservativeResize(phi.rows() + at.values.rows(), Eigen::NoChange);
    phi.bottomRows(at.values.rows()) = at.values;
  }

  AttributionMatrix all_phi;
  all_phi.values = phi;
  all_phi.method = "kernel_shap";
  all_phi.target = "cluster_classifier_log_odds[own cluster]";
  all_phi.feature_names = data.feature_names;
  all_phi.sample_ids = gather(data.sample_ids, member_rows);
  all_phi.background_policy = bg.policy;
  all_phi.seed = s.classifier.seed;
  all_phi.budget = s.n_coalitions;
  ensure_parent(L.strat_attr());
  write_attribution(all_phi, L.strat_attr(), L.strat_attr_meta());
  {
    std::ofstream out(L.drivers(), std::ios::binary);
    if (!out) throw Error("cannot write " + L.drivers().string());
    out << drivers_csv.str();
  }

  ojson per_cluster = ojson::array();
  for (const auto& r : report) {
    per_cluster.push_back({{"cluster", r.cls},
                           {"precision", r.precision},
                           {"recall", r.recall},
                           {"f1", r.f1},
                           {"support", r.support}});
  }
  write_json(L.strat_metrics(), {{"n_clusters", all.size()},
                                 {"included_clusters", included},
                                 {"excluded_clusters", excluded},
                                 {"test_fraction", s.test_fraction},
                                 {"n_train", train.size()},
                                 {"n_test", test.size()},
                                 {"per_cluster", per_cluster},
                                 {"macro_f1", f1},
                                 {"control_macro_f1", control_mean},
                                 {"control_runs", control},
                                 {"top_k", s.top_k},
                                 {"drivers", drivers}});
}

// ---- report ----------------------------------------------------------------

std::vector<fs::path> stage_artifacts(Stage stage, const PipelineConfig& c, const Layout& L) {
  std::vector<fs::path> out;
  const auto snaps = c.snapshots();
  switch (stage) {
    case Stage::synth:
      out = {L.expression(), L.labels()};
      if (c.data.synthetic) out.push_back(L.truth());
      break;
    case Stage::train:
      out = {L.checkpoint(), L.metrics(), L.split()};
      for (std::size_t e : snaps) {
        for (LayerId id : kCaptureLayers) out.push_back(L.snapshot(e, id));
      }
      if (c.cross_validate) out.push_back(L.cv_metrics());
      break;
    case Stage::attribute:
      for (std::size_t e : snaps) {
        for (LayerId id : c.manifold.layers) {
          out.push_back(L.attribution(e, id));
          out.push_back(L.attribution_meta(e, id));
        }
      }
      out.push_back(L.vanilla());
      out.push_back(L.vanilla_meta());
      break;
    case Stage::embed:
      for (std::size_t e : snaps) {
        for (LayerId id : c.manifold.layers) {
          for (const char* source : kSources) out.push_back(L.embedding(source, e, id));
        }
      }
      out.push_back(L.vanilla_embedding());
      out.push_back(L.input_embedding());
      break;
    case Stage::score:
      out = {L.scores()};
      break;
    case Stage::leiden:
      out = {L.clusters(), L.leiden()};
      break;
    case Stage::stratify:
      out = {L.strat_metrics(), L.drivers(), L.strat_attr(), L.strat_attr_meta()};
      break;
    case Stage::report:
      out = {L.report(), L.figures()};
      break;
  }
  return out;
}

bool complete(const std::vector<fs::path>& paths) {
  return std::all_of(paths.begin(), paths.end(), [](const fs::path& p) { return fs::exists(p); });
}

ojson xy_json(const Eigen::MatrixXd& coords) {
  std::vector<double> x(static_cast<std::size_t>(coords.rows())), y(x.size());
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    x[static_cast<std::size_t>(i)] = coords(i, 0);
    y[static_cast<std::size_t>(i)] = coords(i, 1);
  }
  return {{"x", x}, {"y", y}};
}

ojson metrics_json(const Layout& L) {
  const csv::Table t = csv::read_table(L.metrics());
  std::map<std::string, ojson> split;
  ojson epochs = ojson::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    auto& s = split[r[2]];
    if (r[2] == "train") epochs.push_back(std::stoul(r[0]));
    for (std::size_t col = 3; col < 7; ++col) {
      s[t.header[col]].push_back(csv::parse_double(r[col], L.metrics(), t.line_numbers[i], col + 1));
    }
  }
  return {{"epoch", epochs}, {"train", split["train"]}, {"val", split["val"]}};
}

void stage_report(const PipelineConfig& c, const Layout& L) {
  const auto snaps = c.snapshots();
  const std::size_t final_epoch = snaps.back();
  ojson stages = ojson::array();
  ojson missing = ojson::array();
  std::map<Stage, bool> done;
  for (std::size_t s = 0; s + 1 < std::size(kStageNames); ++s) {
    const auto stage = static_cast<Stage>(s);
    const auto paths = stage_artifacts(stage, c, L);
    done[stage] = complete(paths);
    ojson listed = ojson::array();
    for (const auto& p : paths) {
      if (fs::exists(p)) listed.push_back(L.rel(p));
    }
    stages.push_back({{"name", kStageNames[s]}, {"complete", done[stage]}, {"artifacts", listed}});
    if (!done[stage]) missing.push_back(kStageNames[s]);
  }
  stages.push_back({{"name", "report"},
                    {"complete", true},
                    {"artifacts", {L.rel(L.report()), L.rel(L.figures())}}});

  std::optional<Dataset> data;
  if (done[Stage::synth]) data = load_data(L);

  ojson summary;
  ojson figures = {{"format", "advrep-figures"}, {"version", 1}};
  figures["samples"] = nullptr;
  if (data) {
    figures["samples"] = {{"sample_id", data->sample_ids}, {"label", data->label}, {"domain", data->domain},
                          {"domain_names", data->domain_names}};
  }

  summary["final_metrics"] = nullptr;
  figures["training_curves"] = nullptr;
  if (done[Stage::train]) {
    const ojson curves = metrics_json(L);
    figures["training_curves"] = curves;
    ojson fm = {{"epoch", curves["epoch"].back()}};
    for (const char* split : {"train", "val"}) {
      for (const char* m : {"label_loss", "label_acc", "domain_loss", "domain_acc"}) {
        fm[std::string(split) + "_" + m] = curves[split][m].back();
      }
    }
    summary["final_metrics"] = fm;
  }

  ojson sil = ojson::array();
  figures["input_embedding"] = nullptr;
  figures["vanilla_embedding"] = nullptr;
  figures["snapshot_embeddings"] = ojson::array();
  if (data && done[Stage::embed]) {
    auto add = [&](const fs::path& p, const std::string& source, const ojson& layer, const ojson& epoch) {
      const Eigen::MatrixXd coords = read_values(L, p, Stage::embed, data->size());
      sil.push_back({{"manifold", L.rel(p)},
                     {"source", source},
                     {"layer", layer},
                     {"epoch", epoch},
                     {"label", silhouette(coords, data->label)},
                     {"domain", silhouette(coords, data->domain)}});
      return coords;
    };
    figures["input_embedding"] = xy_json(add(L.input_embedding(), "input", nullptr, nullptr));
    figures["vanilla_embedding"] = xy_json(add(L.vanilla_embedding(), "vanilla_shap", nullptr, nullptr));
    for (std::size_t e : snaps) {
      for (LayerId id : c.manifold.layers) {
        for (const char* source : kSources) {
          const fs::path p = L.embedding(source, e, id);
          const Eigen::MatrixXd coords =
              e == final_epoch ? add(p, source, std::string(layer_name(id)), e)
                               : read_values(L, p, Stage::embed, data->size());
          ojson entry = {{"epoch", e}, {"layer", std::string(layer_name(id))}, {"source", source}};
          entry.update(xy_json(coords));
          figures["snapshot_embeddings"].push_back(entry);
        }
      }
    }
  }
  summary["silhouette"] = sil;

  figures["metric_curves"] = ojson::array();
  if (done[Stage::score]) {
    std::map<std::tuple<std::string, std::string, std::string, std::string>, ojson> curves;
    for (const ScoreRow& r : read_scores_csv(L.scores())) {
      auto& cur = curves[{r.layer, r.source, r.label_kind, r.metric}];
      if (cur.is_null()) {
        cur = {{"layer", r.layer}, {"source", r.source}, {"label_kind", r.label_kind}, {"metric", r.metric},
               {"epoch", ojson::array()}, {"raw", ojson::array()}, {"normalized", ojson::array()},
               {"smoothed", ojson::array()}};
      }
      cur["epoch"].push_back(r.epoch);
      cur["raw"].push_back(r.raw);
      cur["normalized"].push_back(r.normalized);
      cur["smoothed"].push_back(r.smoothed);
    }
    for (auto& [key, v] : curves) figures["metric_curves"].push_back(v);
  }

  summary["leiden"] = nullptr;
  figures["clusters"] = nullptr;
  std::vector<int> clusters;
  if (data && done[Stage::leiden]) {
    const json lj = read_json(L.leiden());
    clusters = read_clusters(L, *data);
    summary["leiden"] = {{"n_clusters", lj.at("n_clusters")},
                         {"resolution", lj.at("resolution")},
                         {"quality", lj.at("quality")},
                         {"n_neighbors", lj.at("n_neighbors")},
                         {"layer", lj.at("layer")},
                         {"epoch", lj.at("epoch")}};
    figures["clusters"] = {{"membership", clusters}};
  }

  summary["stratify"] = nullptr;
  figures["violin"] = nullptr;
  if (data && done[Stage::stratify] && !clusters.empty()) {
    const json sj = read_json(L.strat_metrics());
    summary["stratify"] = {{"macro_f1", sj.at("macro_f1")},
                           {"control_macro_f1", sj.at("control_macro_f1")},
                           {"excluded_clusters", sj.at("excluded_clusters")},
                           {"per_cluster", sj.at("per_cluster")},
                           {"drivers", sj.at("drivers")}};
    const AttributionMatrix at = read_attribution(L.strat_attr(), L.strat_attr_meta());
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < data->size(); ++i) row_of[data->sample_ids[i]] = i;
    std::map<std::string, std::size_t> col_of;
    for (std::size_t j = 0; j < at.feature_names.size(); ++j) col_of[at.feature_names[j]] = j;
    const Eigen::MatrixXd transformed = violin_transform(at.values);
    ojson series = ojson::array();
    for (const auto& d : sj.at("drivers")) {
      const int k = d.at("cluster").get<int>();
      for (const auto& f : d.at("features")) {
        const std::string name = f.at("feature").get<std::string>();
        const auto col = static_cast<Eigen::Index>(col_of.at(name));
        std::vector<double> values;
        for (std::size_t r = 0; r < at.sample_ids.size(); ++r) {
          if (clusters[row_of.at(at.sample_ids[r])] == k) values.push_back(transformed(static_cast<Eigen::Index>(r), col));
        }
        series.push_back({{"cluster", k}, {"feature", name}, {"values", values}});
      }
    }
    figures["violin"] = {{"alpha", -2.0}, {"base", 10.0}, {"eps", 1e-9}, {"series", series}};
  }

  ojson report = {{"format", "advrep-report"},
                  {"version", 1},
                  {"config", config_json(c)},
                  {"stages", stages},
                  {"missing_stages", missing},
                  {"summary", summary},
                  {"figures", L.rel(L.figures())}};
  write_json(L.figures(), figures);
  write_json(L.report(), report);
}

}  // namespace

std::vector<std::size_t> PipelineConfig::snapshots() const {
  std::vector<std::size_t> out;
  if (snapshot_epochs.empty()) {
    for (std::size_t e : kDefaultSnapshotEpochs) {
      if (e <= train.epochs) out.push_back(e);
    }
  } else {
    out = snapshot_epochs;
  }
  out.push_back(train.epochs);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void PipelineConfig::validate() const {
  if (data.synthetic) data.synth.validate();
  train.validate();
  for (std::size_t e : snapshot_epochs) {
    if (e < 1 || e > train.epochs) {
      throw ContractError("config: snapshot epoch " + std::to_string(e) + " outside [1, " +
                          std::to_string(train.epochs) + "]");
    }
  }
  if (attribution.background_size < 1) throw ContractError("config: attribution.background_size must be >= 1");
  attribution.surrogate.validate();
  stratify.classifier.validate();
  if (manifold.umap.n_neighbors < 2) throw ContractError("config: manifold.n_neighbors must be >= 2");
  if (manifold.umap.epochs < 1) throw ContractError("config: manifold.epochs must be >= 1");
  if (!(manifold.lowess_frac > 0.0 && manifold.lowess_frac <= 1.0)) {
    throw ContractError("config: manifold.lowess_frac must lie in (0, 1]");
  }
  if (leiden.n_neighbors < 1) throw ContractError("config: leiden.n_neighbors must be >= 1");
  if (!(leiden.resolution >= 0.0)) throw ContractError("config: leiden.resolution must be non-negative");
  if (!(stratify.test_fraction > 0.0 && stratify.test_fraction < 1.0)) {
    throw ContractError("config: stratify.test_fraction must lie in (0, 1)");
  }
  if (stratify.top_k < 1) throw ContractError("config: stratify.top_k must be >= 1");
}

PipelineConfig parse_pipeline_config(std::string_view json_text, std::optional<std::uint64_t> seed) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_document(doc, fs::current_path(), seed);
}

PipelineConfig load_pipeline_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ContractError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ContractError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return parse_document(doc, fs::absolute(path).parent_path(), seed);
}

std::string config_to_json(const PipelineConfig& config) { return config_json(config).dump(2); }

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  }
  std::string valid;
  for (auto n : kStageNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw ContractError("unknown command '" + std::string(name) + "'; valid commands: " + valid);
}

void run_stage(Stage stage, const PipelineConfig& config, const fs::path& run_dir) {
  const Layout L{run_dir};
  fs::create_directories(run_dir);
  switch (stage) {
    case Stage::synth: return stage_synth(config, L);
    case Stage::train: return stage_train(config, L);
    case Stage::attribute: return stage_attribute(config, L);
    case Stage::embed: return stage_embed(config, L);
    case Stage::score: return stage_score(config, L);
    case Stage::leiden: return stage_leiden(config, L);
    case Stage::stratify: return stage_stratify(config, L);
    case Stage::report: return stage_report(config, L);
  }
}

}  // namespace advrep
