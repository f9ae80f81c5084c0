#pragma once

#include "enopt/linalg.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace enopt {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal representation that parses back to the same double.
[[nodiscard]] std::string format_double(double value);
[[nodiscard]] double parse_double(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Plain comma-separated reader: no quoting, blank lines skipped, every row
/// must have as many fields as the header.
[[nodiscard]] CsvTable read_csv(std::istream& in);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Ensemble files: header dim_0,...,dim_{d-1}; one member per row.
/// Returns members as columns (d x N).
[[nodiscard]] Matrix read_ensemble_csv(std::istream& in);
[[nodiscard]] Matrix read_ensemble_csv(const std::string& path);
void write_ensemble_csv(std::ostream& out, const Matrix& members);

/// Numeric table with an arbitrary header; rows stay rows.
[[nodiscard]] Matrix read_numeric_csv(std::istream& in);
[[nodiscard]] Matrix read_numeric_csv(const std::string& path);
void write_numeric_csv(std::ostream& out, const std::vector<std::string>& header,
                       const Matrix& rows);

}  // namespace enopt
