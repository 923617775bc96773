#include "maxsmooth/csv.hpp"

#include <charconv>
#include <cmath>

namespace maxsmooth {

IngestError::IngestError(long line, const std::string& message)
    : InvalidArgument(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& field, long line, const char* name) {
  const std::string f = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
    throw IngestError(line, std::string(name) + " '" + f + "' is not a number");
  }
  if (!std::isfinite(v)) throw IngestError(line, std::string(name) + " is not finite");
  return v;
}

int parse_int(const std::string& field, long line, const char* name) {
  const std::string f = trim(field);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
    throw IngestError(line, std::string(name) + " '" + f + "' is not an integer");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::vector<CsvRow> read_csv(std::istream& in, std::vector<std::string>& header) {
  std::string line;
  long ln = 0;
  if (!std::getline(in, line)) throw IngestError(1, "empty file, expected a header");
  ++ln;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  header = split_fields(trim(line));
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    ++ln;
    line = trim(line);
    if (line.empty()) continue;
    CsvRow r{ln, split_fields(line)};
    if (r.fields.size() != header.size()) {
      throw IngestError(ln, "expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(r.fields.size()));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CsvRow> read_csv(std::istream& in, const std::vector<std::string>& expected) {
  std::vector<std::string> header;
  // Header validity is checked before any row so a bad header reports line 1.
  std::string first;
  if (!std::getline(in, first)) throw IngestError(1, "empty file, expected a header");
  if (first.rfind("\xEF\xBB\xBF", 0) == 0) first.erase(0, 3);
  header = split_fields(trim(first));
  if (header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw IngestError(1, "header must be '" + want + "'");
  }
  std::vector<CsvRow> rows;
  std::string line;
  long ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    line = trim(line);
    if (line.empty()) continue;
    CsvRow r{ln, split_fields(line)};
    if (r.fields.size() != expected.size()) {
      throw IngestError(ln, "expected " + std::to_string(expected.size()) + " fields, found " +
                                std::to_string(r.fields.size()));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace maxsmooth
