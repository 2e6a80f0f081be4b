#include "clustloc/io.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "clustloc/errors.hpp"

namespace clustloc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line, const std::string& where) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) fail(ErrorCode::FormatError, where + ": unterminated quoted field");
  fields.push_back(was_quoted ? cur : trim(cur));
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos && s == trim(s)) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

DataSet parse_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto where = [&](std::size_t row) { return source + ":" + std::to_string(row); };
  do {
    if (!std::getline(in, line)) fail(ErrorCode::FormatError, source + ": missing header row");
    ++lineno;
  } while (trim(line).empty());

  const auto header = split_record(line, where(lineno));
  int cluster_col = -1, group_col = -1;
  std::vector<std::size_t> response_cols;
  DataSet data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "cluster") {
      if (cluster_col >= 0) fail(ErrorCode::FormatError, where(lineno) + ": duplicate 'cluster' column");
      cluster_col = static_cast<int>(j);
    } else if (header[j] == "group") {
      if (group_col >= 0) fail(ErrorCode::FormatError, where(lineno) + ": duplicate 'group' column");
      group_col = static_cast<int>(j);
    } else {
      response_cols.push_back(j);
      data.response_names.push_back(header[j]);
    }
  }
  if (cluster_col < 0) fail(ErrorCode::FormatError, source + ": no 'cluster' column in header");
  if (response_cols.size() < 2)
    fail(ErrorCode::FormatError, source + ": need at least two response columns, found " +
                                     std::to_string(response_cols.size()));

  std::vector<std::vector<double>> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line, where(lineno));
    if (fields.size() != header.size())
      fail(ErrorCode::FormatError, where(lineno) + ": expected " + std::to_string(header.size()) +
                                       " fields, found " + std::to_string(fields.size()));
    const std::string& cl = fields[static_cast<std::size_t>(cluster_col)];
    if (cl.empty()) fail(ErrorCode::FormatError, where(lineno) + ", column 'cluster': empty label");
    data.cluster_labels.push_back(cl);
    if (group_col >= 0) {
      const std::string& g = fields[static_cast<std::size_t>(group_col)];
      if (g.empty()) fail(ErrorCode::FormatError, where(lineno) + ", column 'group': empty label");
      data.group_labels.push_back(g);
    }
    std::vector<double> row;
    for (std::size_t j : response_cols) {
      double v = 0.0;
      if (!parse_double(fields[j], v) || !std::isfinite(v))
        fail(ErrorCode::FormatError, where(lineno) + ", column '" + header[j] +
                                         "': not a finite number: '" + fields[j] + "'");
      row.push_back(v);
    }
    values.push_back(std::move(row));
  }
  if (values.empty()) fail(ErrorCode::FormatError, source + ": no data rows");
  data.y.resize(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(response_cols.size()));
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < response_cols.size(); ++j)
      data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
  return data;
}

DataSet ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FormatError, path + ": cannot open file");
  return parse_csv(in, path);
}

std::string emit_csv(const DataSet& data) {
  std::ostringstream s;
  s << "cluster";
  if (data.has_groups()) s << ",group";
  for (const auto& name : data.response_names) s << ',' << quote_if_needed(name);
  s << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    s << quote_if_needed(data.cluster_labels[i]);
    if (data.has_groups()) s << ',' << quote_if_needed(data.group_labels[i]);
    for (Eigen::Index j = 0; j < data.y.cols(); ++j)
      s << ',' << format_number(data.y(static_cast<Eigen::Index>(i), j));
    s << '\n';
  }
  return s.str();
}

Vector read_weights(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FormatError, path + ": cannot open weight file");
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    double v = 0.0;
    if (!parse_double(t, v)) {
      if (values.empty() && (t == "w" || t == "weight")) continue;
      fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": not a number: '" + t + "'");
    }
    if (!(v >= 0.0) || !std::isfinite(v))
      fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": weights must be finite and nonnegative");
    values.push_back(v);
  }
  if (values.size() != n)
    fail(ErrorCode::FormatError, path + ": expected " + std::to_string(n) + " weights, found " +
                                     std::to_string(values.size()));
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace clustloc
