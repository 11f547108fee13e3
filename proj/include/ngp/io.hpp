#pragma once

#include "ngp/types.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

// CSV exchange format for the CLI: a `t,y` header followed by one
// comma-separated numeric pair per line.  Parse failures carry the 1-based
// line number; structural problems with the data itself (duplicates,
// non-monotone times) are ValidationErrors raised by TimeSeries::validate.

namespace ngp::io {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& field, std::size_t line_no) {
  const std::string f = trim(field);
  double value = 0.0;
  const char* begin = f.data();
  const char* end = f.data() + f.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw IoError("CSV parse error at line " + std::to_string(line_no) +
                  ": '" + field + "' is not a number");
  return value;
}

inline TimeSeries read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file '" + path + "'");

  TimeSeries series;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (!header_seen) {
      if (stripped != "t,y" && stripped != "t, y")
        throw IoError("CSV parse error at line " + std::to_string(line_no) +
                      ": expected header 't,y', got '" + stripped + "'");
      header_seen = true;
      continue;
    }
    const std::size_t comma = stripped.find(',');
    if (comma == std::string::npos ||
        stripped.find(',', comma + 1) != std::string::npos)
      throw IoError("CSV parse error at line " + std::to_string(line_no) +
                    ": expected exactly two comma-separated fields");
    series.t.push_back(parse_double(stripped.substr(0, comma), line_no));
    series.y.push_back(parse_double(stripped.substr(comma + 1), line_no));
  }
  if (!header_seen) throw IoError("CSV file '" + path + "' is empty");
  if (series.t.empty()) throw IoError("CSV file '" + path + "' has no data rows");
  return series;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw IoError("failed writing to '" + path + "'");
}

}  // namespace ngp::io
