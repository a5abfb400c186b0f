#include "advrep/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "advrep/error.hpp"

namespace advrep::csv {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec == std::errc()) return std::string(buf, ptr);
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": expected " << table.header.size() << " fields, found "
          << fields.size();
      throw ParseError(msg.str());
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw ParseError(path.string() + ": missing header row");
  return table;
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": column " << col + 1 << ": non-numeric value '" << cell << "'";
    throw ParseError(msg.str());
  }
  return v;
}

void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& row_ids,
                  const std::vector<std::string>& col_names, const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(row_ids.size()) != values.rows() ||
      static_cast<Eigen::Index>(col_names.size()) != values.cols()) {
    throw DimensionError("write_matrix: labels do not match matrix shape");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id";
  for (const auto& c : col_names) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ',' << format_double(values(i, j));
    out << '\n';
  }
}

LabeledMatrix read_matrix(const std::filesystem::path& path) {
  Table t = read_table(path);
  LabeledMatrix m;
  m.col_names.assign(t.header.begin() + 1, t.header.end());
  m.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(m.col_names.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    m.row_ids.push_back(t.rows[i][0]);
    for (std::size_t j = 1; j < t.rows[i].size(); ++j) {
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) =
          parse_double(t.rows[i][j], path, t.line_numbers[i], j);
    }
  }
  return m;
}

}  // namespace advrep::csv
