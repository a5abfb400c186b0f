#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace advrep::csv {

/// Shortest text that parses back to exactly `v` ("%.17g" fallback).
std::string format_double(double v);

/// Splits one line on commas. No quoting: fields never contain commas here.
std::vector<std::string> split_line(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Reads a header + rows file; ragged rows raise ParseError naming the line.
Table read_table(const std::filesystem::path& path);

/// Parses a full numeric cell; ParseError names the file position on failure.
double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line, std::size_t col);

/// Writes `sample_id,<col names...>` followed by one row per matrix row.
void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& row_ids,
                  const std::vector<std::string>& col_names, const Eigen::MatrixXd& values);

struct LabeledMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_names;
  Eigen::MatrixXd values;
};

/// Inverse of write_matrix.
LabeledMatrix read_matrix(const std::filesystem::path& path);

}  // namespace advrep::csv
