#include "stiffid/trace_io.hpp"

#include "stiffid/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace stiffid {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(long line, const std::string& what) {
  throw InvalidInputError("line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& field, long line) {
  std::string s = field;
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  double v = 0.0;
  const char* first = s.data() + i;
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last)
    fail(line, "'" + field + "' is not a number");
  if (!std::isfinite(v)) fail(line, "non-finite value '" + field + "'");
  return v;
}

// Counts a run of columns named prefix_1, prefix_2, ... starting at `pos`.
int count_run(const std::vector<std::string>& header, std::size_t pos, const std::string& prefix) {
  int n = 0;
  while (pos + n < header.size() && header[pos + n] == prefix + "_" + std::to_string(n + 1)) ++n;
  return n;
}

}  // namespace

void write_trace_csv(const SimTrace& trace, std::ostream& out) {
  trace.validate();
  const Eigen::Index n = trace.length();
  out << 't';
  for (Eigen::Index j = 0; j < trace.inputs.cols(); ++j) out << ",u_" << j + 1;
  for (Eigen::Index j = 0; j < trace.outputs.cols(); ++j) out << ",y_" << j + 1;
  if (trace.has_states())
    for (Eigen::Index j = 0; j < trace.states.cols(); ++j) out << ",x_" << j + 1;
  if (trace.has_stiffness()) out << ",k_true";
  out << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    out << format_double(trace.time[i]);
    for (Eigen::Index j = 0; j < trace.inputs.cols(); ++j) out << ',' << format_double(trace.inputs(i, j));
    for (Eigen::Index j = 0; j < trace.outputs.cols(); ++j) out << ',' << format_double(trace.outputs(i, j));
    if (trace.has_states())
      for (Eigen::Index j = 0; j < trace.states.cols(); ++j) out << ',' << format_double(trace.states(i, j));
    if (trace.has_stiffness()) out << ',' << format_double(trace.stiffness[i]);
    out << '\n';
  }
}

void write_trace_csv(const SimTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_trace_csv(trace, out);
  if (!out) throw IoError("failed writing " + path.string());
}

SimTrace read_trace_csv(std::istream& in, const TraceDims& dims) {
  std::string line;
  long line_no = 1;
  if (!std::getline(in, line)) fail(1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);
  if (header.empty() || header[0] != "t") fail(1, "first column must be 't'");
  std::size_t pos = 1;
  const int nu = count_run(header, pos, "u");
  pos += nu;
  const int ny = count_run(header, pos, "y");
  pos += ny;
  const int nx = count_run(header, pos, "x");
  pos += nx;
  bool has_k = false;
  if (pos < header.size() && header[pos] == "k_true") {
    has_k = true;
    ++pos;
  }
  if (pos != header.size()) fail(1, "unexpected column '" + header[pos] + "'");
  if (nu == 0 || ny == 0) fail(1, "header needs at least one u_ and one y_ column");
  if (dims.inputs >= 0 && dims.inputs != nu)
    fail(1, "expected " + std::to_string(dims.inputs) + " input columns, found " + std::to_string(nu));
  if (dims.outputs >= 0 && dims.outputs != ny)
    fail(1, "expected " + std::to_string(dims.outputs) + " output columns, found " + std::to_string(ny));
  if (dims.states >= 0 && nx != 0 && dims.states != nx)
    fail(1, "expected " + std::to_string(dims.states) + " state columns, found " + std::to_string(nx));

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line);
    if (fields.size() != header.size())
      fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_number(fields[j], line_no);
    if (!rows.empty()) {
      const double prev = rows.back()[0];
      if (!(row[0] > prev)) fail(line_no, "time column is not increasing");
      if (rows.size() >= 2) {
        const double dt0 = rows[1][0] - rows[0][0];
        if (std::abs((row[0] - prev) - dt0) > 1e-9) fail(line_no, "time step differs from the first step");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) fail(line_no, "trace needs at least two samples");

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  SimTrace trace;
  trace.dt = rows[1][0] - rows[0][0];
  trace.time.resize(n);
  trace.inputs.resize(n, nu);
  trace.outputs.resize(n, ny);
  if (nx > 0) trace.states.resize(n, nx);
  if (has_k) trace.stiffness.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    std::size_t c = 0;
    trace.time[i] = r[c++];
    for (int j = 0; j < nu; ++j) trace.inputs(i, j) = r[c++];
    for (int j = 0; j < ny; ++j) trace.outputs(i, j) = r[c++];
    for (int j = 0; j < nx; ++j) trace.states(i, j) = r[c++];
    if (has_k) trace.stiffness[i] = r[c++];
  }
  trace.validate();
  return trace;
}

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  throw InvalidInputError("missing column '" + name + "'");
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError(path.string() + " line 1: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvTable table;
  table.header = split(line);
  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line);
    if (fields.size() != table.header.size())
      throw InvalidInputError(path.string() + " line " + std::to_string(line_no) +
                              ": wrong number of fields");
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_number(fields[j], line_no);
    rows.push_back(std::move(row));
  }
  table.data.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

SimTrace read_trace_csv(const std::filesystem::path& path, const TraceDims& dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace file " + path.string());
  return read_trace_csv(in, dims);
}

}  // namespace stiffid
