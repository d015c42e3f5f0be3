#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vaxsignal::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the record starts
};

// RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::optional<Row> next();

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

// Header + records; column lookup by name.
struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of `name` in the header, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  // Same, but throws ParseError naming the missing column.
  std::size_t require_column(std::string_view name) const;
};

Table read_table(std::istream& in);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trip decimal representation.
std::string format_double(double x);

std::string trim(std::string_view s);

}  // namespace vaxsignal::csv
