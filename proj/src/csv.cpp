#include "rfl/csv.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rfl {
namespace {

bool needs_quoting(const std::string& f) {
  return f.find_first_of(",\"\r\n") != std::string::npos;
}

double parse_real(const std::string& cell, Index row, const std::string& col) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE) {
    throw ParseError("non-numeric value '" + cell + "' in column '" + col + "' at row " +
                     std::to_string(row));
  }
  return v;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any_field = false;

  std::size_t i = 0;
  const std::size_t n = text.size();
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    any_field = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < n) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          quoted = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
      any_field = true;
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any_field = true;
        ++i;
        break;
      case ',':
        end_field();
        any_field = true;  // a comma implies a following (possibly empty) field
        ++i;
        break;
      case '\r':
        if (i + 1 < n && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_record();
        ++i;
        break;
      default:
        field += c;
        any_field = true;
        ++i;
        break;
    }
  }
  if (any_field || !field.empty() || !record.empty()) end_record();
  return records;
}

HorizontalPartition load_csv(const std::string& path, const TableSchema& schema,
                             ClientId owner) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open CSV file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  HorizontalPartition part;
  part.owner = owner;
  part.schema = schema;

  auto records = parse_csv(text);
  const Index d = schema.feature_count();
  if (records.empty()) {
    // Zero-byte file: empty partition.
    part.features.resize(0, d);
    if (schema.has_label()) part.labels = Vector(0);
    return part;
  }

  const auto& header = records.front();
  auto column_of = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return static_cast<int>(c);
    }
    throw SchemaError("CSV '" + path + "' is missing column '" + name + "'");
  };

  std::vector<int> key_idx, feat_idx;
  for (const auto& c : schema.join_key_cols) key_idx.push_back(column_of(c));
  for (const auto& c : schema.feature_cols) feat_idx.push_back(column_of(c));
  int label_idx = schema.has_label() ? column_of(*schema.label_col) : -1;

  const Index n = static_cast<Index>(records.size()) - 1;
  part.keys.reserve(n);
  part.features.resize(n, d);
  if (schema.has_label()) part.labels = Vector(n);

  for (Index r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    auto cell = [&](int c) -> const std::string& {
      static const std::string empty;
      return c < static_cast<int>(rec.size()) ? rec[c] : empty;
    };
    std::vector<std::string> key_row;
    key_row.reserve(key_idx.size());
    for (int c : key_idx) key_row.push_back(cell(c));
    part.keys.push_back(std::move(key_row));
    for (Index f = 0; f < d; ++f) {
      part.features(r, f) = parse_real(cell(feat_idx[f]), r + 1, schema.feature_cols[f]);
    }
    if (label_idx >= 0) {
      (*part.labels)(r) = parse_real(cell(label_idx), r + 1, *schema.label_col);
    }
  }
  part.validate();
  return part;
}

void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write CSV file '" + path + "'");
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i) out << ',';
      if (needs_quoting(rec[i])) {
        out << '"';
        for (char c : rec[i]) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << rec[i];
      }
    }
    out << '\n';
  }
}

}  // namespace rfl
