#pragma once

// RFC 4180 CSV: fields containing ',', '"', CR or LF are quoted, quotes doubled.

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace earth::csv {

using Row = std::vector<std::string>;

void append_row(std::string& out, std::span<const std::string> fields);
std::vector<Row> parse(std::string_view data);

// 17 significant digits, enough to round-trip any double.
std::string format_double(double x);
double parse_double(const std::string& s);  // throws schema_mismatch

}  // namespace earth::csv
