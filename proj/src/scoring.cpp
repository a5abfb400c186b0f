#include "advrep/scoring.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <tuple>

#include "advrep/csv.hpp"
#include "advrep/error.hpp"
#include "advrep/manifold.hpp"
#include "advrep/parallel.hpp"

namespace advrep {

namespace {

constexpr const char* kScoresHeader = "epoch,layer,source,label_kind,metric,raw,normalized,smoothed";

}  // namespace

std::vector<ScoreRow> score_series(const std::vector<ManifoldInput>& manifolds, std::span<const int> labels,
                                   std::span<const int> domains, double frac) {
  if (labels.size() != domains.size()) throw DimensionError("score_series: label and domain lengths differ");
  for (const auto& m : manifolds) {
    if (static_cast<std::size_t>(m.coords.rows()) != labels.size()) {
      throw DimensionError("score_series: manifold at epoch " + std::to_string(m.epoch) + " has " +
                           std::to_string(m.coords.rows()) + " rows, expected " + std::to_string(labels.size()));
    }
  }
  // raw[i] = {label silhouette, label CH, domain silhouette, domain CH}
  std::vector<std::array<double, 4>> raw(manifolds.size());
  parallel_for(manifolds.size(), [&](std::size_t i) {
    const auto& c = manifolds[i].coords;
    raw[i] = {silhouette(c, labels), calinski_harabasz(c, labels), silhouette(c, domains),
              calinski_harabasz(c, domains)};
  });

  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<std::pair<std::size_t, double>>> curves;
  const char* kinds[2] = {"label", "domain"};
  const char* metrics[2] = {"silhouette", "calinski_harabasz"};
  for (std::size_t i = 0; i < manifolds.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      for (int m = 0; m < 2; ++m) {
        curves[{manifolds[i].layer, manifolds[i].source, kinds[k], metrics[m]}].push_back(
            {manifolds[i].epoch, raw[i][static_cast<std::size_t>(2 * k + m)]});
      }
    }
  }

  std::vector<ScoreRow> out;
  for (auto& [key, points] : curves) {
    std::sort(points.begin(), points.end());
    for (std::size_t t = 1; t < points.size(); ++t) {
      if (points[t].first == points[t - 1].first) {
        throw ContractError("score_series: duplicate epoch " + std::to_string(points[t].first) + " in one curve");
      }
    }
    std::vector<double> x, y;
    for (const auto& [e, v] : points) {
      x.push_back(static_cast<double>(e));
      y.push_back(v);
    }
    const std::vector<double> norm = minmax_normalize(y);
    const std::vector<double> smooth = points.size() >= 3 ? lowess(x, norm, frac) : norm;
    for (std::size_t t = 0; t < points.size(); ++t) {
      out.push_back(ScoreRow{points[t].first, std::get<0>(key), std::get<1>(key), std::get<2>(key),
                             std::get<3>(key), y[t], norm[t], smooth[t]});
    }
  }
  return out;
}

std::size_t convergence_epoch(std::span<const std::size_t> epochs, std::span<const double> values, double fraction) {
  if (epochs.empty() || epochs.size() != values.size()) {
    throw ContractError("convergence_epoch: need matching, non-empty epoch and value series");
  }
  const double threshold = fraction * values.back();
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (values[t] >= threshold) return epochs[t];
  }
  return epochs.back();
}

std::vector<ClassScore> classification_report(std::span<const int> truth, std::span<const int> predicted,
                                              std::span<const int> classes) {
  if (truth.size() != predicted.size()) throw DimensionError("classification_report: length mismatch");
  std::vector<ClassScore> out;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c;
      const bool p = predicted[i] == c;
      if (t && p) ++tp;
      if (!t && p) ++fp;
      if (t && !p) ++fn;
    }
    ClassScore s;
    s.cls = c;
    s.support = tp + fn;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    out.push_back(s);
  }
  return out;
}

double macro_f1(const std::vector<ClassScore>& report) {
  if (report.empty()) throw ContractError("macro_f1: empty report");
  double s = 0.0;
  for (const auto& r : report) s += r.f1;
  return s / static_cast<double>(report.size());
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kScoresHeader << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.layer << ',' << r.source << ',' << r.label_kind << ',' << r.metric << ','
        << csv::format_double(r.raw) << ',' << csv::format_double(r.normalized) << ','
        << csv::format_double(r.smoothed) << '\n';
  }
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read_table(path);
  if (t.header != csv::split_line(kScoresHeader)) throw ParseError(path.string() + ": unexpected scores header");
  std::vector<ScoreRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    ScoreRow row;
    row.epoch = static_cast<std::size_t>(csv::parse_double(r[0], path, line, 1));
    row.layer = r[1];
    row.source = r[2];
    row.label_kind = r[3];
    row.metric = r[4];
    row.raw = csv::parse_double(r[5], path, line, 6);
    row.normalized = csv::parse_double(r[6], path, line, 7);
    row.smoothed = csv::parse_double(r[7], path, line, 8);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace advrep
