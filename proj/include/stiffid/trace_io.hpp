#pragma once

#include "stiffid/simulate.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stiffid {

/// Expected column counts; -1 accepts whatever the header declares.
struct TraceDims {
  int inputs = -1;
  int outputs = -1;
  int states = -1;
};

/// Header: t, u_1..u_nu, y_1..y_ny, then optionally x_1..x_nx and k_true.
void write_trace_csv(const SimTrace& trace, std::ostream& out);
void write_trace_csv(const SimTrace& trace, const std::filesystem::path& path);

/// Parses and validates a trace. Schema violations throw InvalidInputError
/// naming the offending line.
SimTrace read_trace_csv(std::istream& in, const TraceDims& dims = {});
SimTrace read_trace_csv(const std::filesystem::path& path, const TraceDims& dims = {});

/// Header plus numeric body of a generic CSV file.
struct CsvTable {
  std::vector<std::string> header;
  Matrix data;

  /// Index of a named column; throws InvalidInputError when missing.
  Eigen::Index column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

}  // namespace stiffid
