#pragma once

#include <istream>
#include <string>
#include <vector>

#include "maxsmooth/error.hpp"

namespace maxsmooth {

// Malformed input file; the message names the 1-based line of the offending row.
class IngestError : public InvalidArgument {
 public:
  IngestError(long line, const std::string& message);
  long line() const { return line_; }

 private:
  long line_;
};

std::string trim(std::string s);
std::vector<std::string> split_fields(const std::string& line);
double parse_double(const std::string& field, long line, const char* name);
int parse_int(const std::string& field, long line, const char* name);
// Shortest representation that parses back to the same double.
std::string format_double(double v);

struct CsvRow {
  long line = 0;
  std::vector<std::string> fields;
};

// Reads a header and the data rows (blank lines skipped, BOM stripped). The
// header must equal `expected` exactly; every row must have as many fields.
std::vector<CsvRow> read_csv(std::istream& in, const std::vector<std::string>& expected);
// Same, returning the header for callers whose columns vary.
std::vector<CsvRow> read_csv(std::istream& in, std::vector<std::string>& header);

}  // namespace maxsmooth
