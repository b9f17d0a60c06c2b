#include "rfl/schema.hpp"

#include <algorithm>
#include <set>

namespace rfl {

int TableSchema::key_index(const std::string& col) const {
  auto it = std::find(join_key_cols.begin(), join_key_cols.end(), col);
  return it == join_key_cols.end() ? -1 : static_cast<int>(it - join_key_cols.begin());
}

void TableSchema::validate() const {
  if (feature_cols.empty()) {
    throw SchemaError("table '" + table_name + "' declares no feature columns");
  }
  if (class_count < 1) {
    throw SchemaError("table '" + table_name + "' has class_count < 1");
  }
  std::set<std::string> seen;
  auto check = [&](const std::string& c) {
    if (!seen.insert(c).second) {
      throw SchemaError("table '" + table_name + "' reuses column '" + c + "'");
    }
  };
  for (const auto& c : join_key_cols) check(c);
  for (const auto& c : feature_cols) check(c);
  if (label_col) check(*label_col);
}

void HorizontalPartition::validate() const {
  schema.validate();
  const Index n = features.rows();
  if (static_cast<Index>(keys.size()) != n) {
    throw SchemaError("partition of '" + schema.table_name + "': key rows (" +
                      std::to_string(keys.size()) + ") != feature rows (" +
                      std::to_string(n) + ")");
  }
  for (const auto& k : keys) {
    if (k.size() != schema.join_key_cols.size()) {
      throw SchemaError("partition of '" + schema.table_name + "': ragged key row");
    }
  }
  if (features.cols() != schema.feature_count()) {
    throw SchemaError("partition of '" + schema.table_name + "': feature width mismatch");
  }
  if (schema.has_label() != labels.has_value()) {
    throw SchemaError("partition of '" + schema.table_name + "': label presence mismatch");
  }
  if (labels && labels->size() != n) {
    throw SchemaError("partition of '" + schema.table_name + "': label length mismatch");
  }
  if (!features.allFinite()) {
    throw SchemaError("partition of '" + schema.table_name + "': non-finite feature");
  }
}

VerticalTable VerticalTable::from_partitions(std::vector<HorizontalPartition> parts) {
  if (parts.empty()) throw SchemaError("vertical table needs at least one partition");
  VerticalTable t;
  t.offsets.push_back(0);
  const TableSchema& first = parts.front().schema;
  for (const auto& p : parts) {
    p.validate();
    if (p.schema.table_name != first.table_name ||
        p.schema.join_key_cols != first.join_key_cols ||
        p.schema.feature_cols != first.feature_cols ||
        p.schema.label_col != first.label_col || p.schema.class_count != first.class_count) {
      throw SchemaError("partitions of '" + first.table_name + "' disagree on schema");
    }
    t.offsets.push_back(t.offsets.back() + p.rows());
  }
  t.partitions = std::move(parts);
  return t;
}

std::pair<int, Index> VerticalTable::locate(Index row) const {
  auto it = std::upper_bound(offsets.begin(), offsets.end(), row);
  int q = static_cast<int>(it - offsets.begin()) - 1;
  return {q, row - offsets[q]};
}

const std::string& VerticalTable::key(Index row, int key_col) const {
  auto [q, local] = locate(row);
  return partitions[q].keys[local][key_col];
}

double VerticalTable::label(Index row) const {
  auto [q, local] = locate(row);
  return (*partitions[q].labels)(local);
}

Matrix VerticalTable::all_features() const {
  Matrix out(rows(), schema().feature_count());
  for (std::size_t q = 0; q < partitions.size(); ++q) {
    out.middleRows(offsets[q], partitions[q].rows()) = partitions[q].features;
  }
  return out;
}

Vector VerticalTable::all_labels() const {
  Vector out(rows());
  for (std::size_t q = 0; q < partitions.size(); ++q) {
    out.segment(offsets[q], partitions[q].rows()) = *partitions[q].labels;
  }
  return out;
}

int Query::label_table() const {
  for (int i = 0; i < table_count(); ++i) {
    if (tables[i].schema().has_label()) return i;
  }
  return -1;
}

void Query::validate() const {
  if (tables.empty()) throw ConfigError("query has no tables");
  int labels = 0;
  for (const auto& t : tables) {
    if (t.schema().has_label()) ++labels;
  }
  if (labels != 1) {
    throw ConfigError("query must have exactly one label-owning table, found " +
                      std::to_string(labels));
  }
  for (const auto& p : predicates) {
    if (p.left_table < 0 || p.left_table >= table_count() || p.right_table < 0 ||
        p.right_table >= table_count()) {
      throw ConfigError("join predicate references a table out of range");
    }
    if (tables[p.left_table].schema().key_index(p.left_col) < 0) {
      throw SchemaError("table '" + tables[p.left_table].schema().table_name +
                        "' has no join key column '" + p.left_col + "'");
    }
    if (tables[p.right_table].schema().key_index(p.right_col) < 0) {
      throw SchemaError("table '" + tables[p.right_table].schema().table_name +
                        "' has no join key column '" + p.right_col + "'");
    }
  }
  // Connectivity of the join graph over tables.
  std::vector<int> comp(tables.size());
  for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = static_cast<int>(i);
  auto root = [&](int x) {
    while (comp[x] != x) x = comp[x] = comp[comp[x]];
    return x;
  };
  for (const auto& p : predicates) comp[root(p.left_table)] = root(p.right_table);
  for (int i = 0; i < table_count(); ++i) {
    if (root(i) != root(0)) {
      throw ConfigError("join graph is disconnected (table '" +
                        tables[i].schema().table_name + "' unreachable)");
    }
  }
}

}  // namespace rfl
