#include "macq/report.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace macq::io {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != header.size()) throw std::invalid_argument("Table: row width differs from header");
  rows.push_back(std::move(cells));
}

void Table::add_numbers(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  add_row(std::move(cells));
}

namespace {

void append_line(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  append_line(out, t.header);
  for (const auto& r : t.rows) append_line(out, r);
  return out;
}

Table parse_csv(std::string_view text) {
  Table t;
  bool first = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (first) {
      t.header = split(line);
      first = false;
    } else {
      t.add_row(split(line));
    }
  }
  return t;
}

}  // namespace macq::io
