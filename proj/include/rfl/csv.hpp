#pragma once

#include <string>
#include <vector>

#include "rfl/schema.hpp"

namespace rfl {

/// Parses an RFC-4180 CSV file (header row, UTF-8) into a partition under
/// `schema`. Features are parsed as 64-bit reals; keys are kept as opaque
/// strings. A zero-byte file yields an empty partition.
HorizontalPartition load_csv(const std::string& path, const TableSchema& schema,
                             ClientId owner);

/// Splits raw CSV text into records of fields (RFC-4180 quoting).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

/// Writes records as RFC-4180 CSV (fields quoted only when needed).
void write_csv(const std::string& path,
               const std::vector<std::vector<std::string>>& records);

}  // namespace rfl
