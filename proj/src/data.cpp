#include "advrep/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "advrep/csv.hpp"
#include "advrep/error.hpp"

namespace advrep {

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

bool parse_int(const std::string& s, long& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

std::size_t column_index(const csv::Table& t, const std::string& name, const std::filesystem::path& path) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw ParseError(path.string() + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = size();
  if (domain.size() != n || label.size() != n || sample_ids.size() != n) {
    throw ContractError("dataset: per-sample vectors do not match row count");
  }
  if (feature_names.size() != n_features()) throw ContractError("dataset: feature names do not match column count");
  if (!X.allFinite()) throw ContractError("dataset: matrix contains non-finite values");
  if (n_domains < 2) throw ContractError("dataset: needs at least 2 domains");
  std::vector<std::size_t> domain_counts(n_domains, 0);
  std::size_t label_counts[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    if (domain[i] < 0 || static_cast<std::size_t>(domain[i]) >= n_domains) {
      throw LabelError("dataset: domain id " + std::to_string(domain[i]) + " of " + sample_ids[i] + " out of range");
    }
    if (label[i] != 0 && label[i] != 1) {
      throw LabelError("dataset: label " + std::to_string(label[i]) + " of " + sample_ids[i] + " is not 0/1");
    }
    ++domain_counts[static_cast<std::size_t>(domain[i])];
    ++label_counts[label[i]];
  }
  for (std::size_t k = 0; k < n_domains; ++k) {
    if (domain_counts[k] < 2) throw ContractError("dataset: domain " + std::to_string(k) + " has fewer than 2 samples");
  }
  if (label_counts[0] < 2 || label_counts[1] < 2) throw ContractError("dataset: each label needs at least 2 samples");
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    out.domain.push_back(domain[rows[i]]);
    out.label.push_back(label[rows[i]]);
    out.sample_ids.push_back(sample_ids[rows[i]]);
  }
  out.feature_names = feature_names;
  out.domain_names = domain_names;
  out.n_domains = n_domains;
  return out;
}

void SynthConfig::validate() const {
  if (n_domains < 2) throw ContractError("synth: need at least 2 domains");
  if (n_per_domain < 2) throw ContractError("synth: need at least 2 samples per domain");
  if (!(label_effect >= 0.0)) throw ContractError("synth: label_effect must be non-negative");
  if (!(domain_effect > label_effect)) throw ContractError("synth: domain_effect must exceed label_effect");
  if (!(domain_profile_sd >= 0.0)) throw ContractError("synth: domain_profile_sd must be non-negative");
  if (!(noise_sd > 0.0)) throw ContractError("synth: noise_sd must be positive");
  if (label_rates.size() != 1 && label_rates.size() != n_domains) {
    throw ContractError("synth: label_rates must have 1 or n_domains entries");
  }
  for (double r : label_rates) {
    if (!(r > 0.0 && r < 1.0)) throw ContractError("synth: label rates must lie in (0,1)");
  }
  const std::size_t needed = disjoint_blocks ? n_domains * domain_block + label_block
                                             : std::max(n_domains * domain_block, label_block);
  if (needed > n_features) throw ContractError("synth: feature blocks do not fit into n_features");
}

SynthData synth_generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, config.noise_sd);
  const std::size_t n = config.n_per_domain * config.n_domains;
  const std::size_t d = config.n_features;

  SynthData out;
  PlantedSignal& truth = out.truth;
  for (std::size_t k = 0; k < config.n_domains; ++k) {
    std::vector<std::size_t> block(config.domain_block);
    std::iota(block.begin(), block.end(), k * config.domain_block);
    truth.domain_features.push_back(std::move(block));
  }
  const std::size_t label_start = config.disjoint_blocks ? config.n_domains * config.domain_block : 0;
  truth.label_features.resize(config.label_block);
  std::iota(truth.label_features.begin(), truth.label_features.end(), label_start);

  Eigen::MatrixXd profile = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(config.n_domains),
                                                  static_cast<Eigen::Index>(d));
  if (config.domain_profile_sd > 0.0) {
    std::normal_distribution<double> offset(0.0, config.domain_profile_sd);
    for (Eigen::Index k = 0; k < profile.rows(); ++k) {
      for (Eigen::Index j = 0; j < profile.cols(); ++j) profile(k, j) = offset(rng);
    }
  }

  Dataset& data = out.data;
  data.n_domains = config.n_domains;
  data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) data.feature_names.push_back(padded("g", j, 4));
  for (std::size_t k = 0; k < config.n_domains; ++k) data.domain_names.push_back(padded("domain", k, 2));

  std::size_t row = 0;
  for (std::size_t k = 0; k < config.n_domains; ++k) {
    const double rate = config.label_rates.size() == 1 ? config.label_rates[0] : config.label_rates[k];
    const auto positives = static_cast<std::size_t>(std::lround(rate * static_cast<double>(config.n_per_domain)));
    std::vector<int> labels(config.n_per_domain, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(positives, labels.size())), 1);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t s = 0; s < config.n_per_domain; ++s, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      for (std::size_t j = 0; j < d; ++j) data.X(r, static_cast<Eigen::Index>(j)) = noise(rng) + profile(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      for (std::size_t j : truth.domain_features[k]) data.X(r, static_cast<Eigen::Index>(j)) += config.domain_effect;
      if (labels[s] == 1) {
        for (std::size_t t = 0; t < truth.label_features.size(); ++t) {
          const double sign = t % 2 == 0 ? 1.0 : -1.0;
          data.X(r, static_cast<Eigen::Index>(truth.label_features[t])) += sign * config.label_effect;
        }
      }
      data.domain.push_back(static_cast<int>(k));
      data.label.push_back(labels[s]);
      data.sample_ids.push_back(padded("s", row, 5));
    }
  }
  return out;
}

Dataset load_expression_csv(const std::filesystem::path& expression_path, const std::filesystem::path& labels_path) {
  const csv::Table expr = csv::read_table(expression_path);
  const csv::Table labels = csv::read_table(labels_path);
  if (expr.header.size() < 2) throw ParseError(expression_path.string() + ": no feature columns");

  std::unordered_map<std::string, std::size_t> expr_row;
  for (std::size_t i = 0; i < expr.rows.size(); ++i) {
    const std::string& id = expr.rows[i][0];
    if (!expr_row.emplace(id, i).second) {
      throw ParseError(expression_path.string() + ":" + std::to_string(expr.line_numbers[i]) +
                       ": duplicate sample id '" + id + "'");
    }
  }

  const std::size_t c_id = column_index(labels, "sample_id", labels_path);
  const std::size_t c_domain = column_index(labels, "domain", labels_path);
  const std::size_t c_label = column_index(labels, "label", labels_path);

  std::set<std::string> seen;
  std::vector<std::string> raw_domains;
  Dataset data;
  for (std::size_t i = 0; i < labels.rows.size(); ++i) {
    const auto& r = labels.rows[i];
    const std::string where = labels_path.string() + ":" + std::to_string(labels.line_numbers[i]);
    if (!seen.insert(r[c_id]).second) throw ParseError(where + ": duplicate sample id '" + r[c_id] + "'");
    if (!expr_row.count(r[c_id])) throw ParseError(where + ": unknown sample id '" + r[c_id] + "'");
    long lab = 0;
    if (!parse_int(r[c_label], lab) || (lab != 0 && lab != 1)) {
      throw ParseError(where + ": label must be 0 or 1, got '" + r[c_label] + "'");
    }
    data.sample_ids.push_back(r[c_id]);
    data.label.push_back(static_cast<int>(lab));
    raw_domains.push_back(r[c_domain]);
  }
  for (std::size_t i = 0; i < expr.rows.size(); ++i) {
    if (!seen.count(expr.rows[i][0])) {
      throw ParseError(labels_path.string() + ": missing label row for sample '" + expr.rows[i][0] + "'");
    }
  }

  // label-encode domains in sorted order
  bool all_int = true;
  for (const auto& s : raw_domains) {
    long v = 0;
    all_int = all_int && parse_int(s, v);
  }
  std::vector<std::string> names(raw_domains.begin(), raw_domains.end());
  std::sort(names.begin(), names.end(), [all_int](const std::string& a, const std::string& b) {
    if (all_int) return std::stol(a) < std::stol(b);
    return a < b;
  });
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::map<std::string, int> code;
  for (std::size_t k = 0; k < names.size(); ++k) code[names[k]] = static_cast<int>(k);
  for (const auto& s : raw_domains) data.domain.push_back(code.at(s));
  data.domain_names = names;
  data.n_domains = names.size();

  data.feature_names.assign(expr.header.begin() + 1, expr.header.end());
  const auto n = static_cast<Eigen::Index>(data.sample_ids.size());
  const auto d = static_cast<Eigen::Index>(data.feature_names.size());
  data.X.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t src = expr_row.at(data.sample_ids[static_cast<std::size_t>(i)]);
    const auto& cells = expr.rows[src];
    for (Eigen::Index j = 0; j < d; ++j) {
      data.X(i, j) = csv::parse_double(cells[static_cast<std::size_t>(j + 1)], expression_path,
                                       expr.line_numbers[src], static_cast<std::size_t>(j + 1));
    }
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& expression_path,
                       const std::filesystem::path& labels_path) {
  csv::write_matrix(expression_path, data.sample_ids, data.feature_names, data.X);
  std::ofstream out(labels_path);
  if (!out) throw Error("cannot write " + labels_path.string());
  out << "sample_id,domain,label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto k = static_cast<std::size_t>(data.domain[i]);
    out << data.sample_ids[i] << ',' << (k < data.domain_names.size() ? data.domain_names[k] : std::to_string(k))
        << ',' << data.label[i] << '\n';
  }
}

std::pair<Eigen::MatrixXd, std::vector<std::string>> collapse_duplicate_genes(
    const Eigen::MatrixXd& X, const std::vector<std::string>& feature_names) {
  if (static_cast<Eigen::Index>(feature_names.size()) != X.cols()) {
    throw DimensionError("collapse_duplicate_genes: " + std::to_string(feature_names.size()) + " names for " +
                         std::to_string(X.cols()) + " columns");
  }
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> names;
  std::vector<std::size_t> target(feature_names.size());
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    auto [it, inserted] = slot.emplace(feature_names[j], names.size());
    if (inserted) names.push_back(feature_names[j]);
    target[j] = it->second;
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < target.size(); ++j) {
    out.col(static_cast<Eigen::Index>(target[j])) += X.col(static_cast<Eigen::Index>(j));
  }
  return {std::move(out), std::move(names)};
}

Eigen::MatrixXd log_transform(const Eigen::MatrixXd& X) {
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (X(i, j) < 0.0) {
        std::ostringstream msg;
        msg << "log_transform: negative value " << X(i, j) << " at row " << i << ", column " << j;
        throw ContractError(msg.str());
      }
    }
  }
  return X.array().log1p().matrix();
}

}  // namespace advrep
