#pragma once

#include <istream>
#include <string>

#include "clustloc/design.hpp"

namespace clustloc {

/// Reads a CSV with a header row. `cluster` names the cluster column, an
/// optional `group` column holds treatment labels, and every other column is
/// a numeric response coordinate (at least two). Errors carry row/column
/// positions.
DataSet ingest_csv(const std::string& path);
DataSet parse_csv(std::istream& in, const std::string& source = "<input>");

/// Inverse of ingest_csv; numbers are written with 17 significant digits.
std::string emit_csv(const DataSet& data);

/// One nonnegative weight per row (a single column, optional header `w` or
/// `weight`).
Vector read_weights(const std::string& path, std::size_t n);

/// 17 significant digits, "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);

}  // namespace clustloc
