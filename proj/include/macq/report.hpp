#pragma once

// Plain CSV tables: '\n' line endings, '.' decimal point, 12 significant digits.

#include <string>
#include <string_view>
#include <vector>

namespace macq::io {

/// printf("%.12g"), with "nan", "inf", "-inf" for non-finite values.
std::string format_number(double x);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells);
  /// Convenience: every cell a number.
  void add_numbers(const std::vector<double>& values);
};

std::string to_csv(const Table& t);

/// Parses what to_csv writes (no quoting; fields must not contain ',' or '\n').
/// Throws std::invalid_argument on ragged rows.
Table parse_csv(std::string_view text);

}  // namespace macq::io
