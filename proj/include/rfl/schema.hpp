#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfl/types.hpp"

namespace rfl {

/// Identifies a client as (organization index, partition index within it).
struct ClientId {
  int org = 0;
  int part = 0;

  friend bool operator==(const ClientId&, const ClientId&) = default;
};

struct TableSchema {
  std::string table_name;
  std::vector<std::string> join_key_cols;
  std::vector<std::string> feature_cols;
  std::optional<std::string> label_col;
  int class_count = 1;  // d_c; 1 for regression

  Index feature_count() const { return static_cast<Index>(feature_cols.size()); }
  bool has_label() const { return label_col.has_value(); }
  int key_index(const std::string& col) const;  // -1 if absent

  /// Checks column disjointness, d_i >= 1, d_c >= 1.
  void validate() const;
};

/// One client's horizontal slice of a vertical table. Keys are opaque
/// strings; features are an n x d_i dense matrix.
struct HorizontalPartition {
  ClientId owner;
  TableSchema schema;
  std::vector<std::vector<std::string>> keys;  // n rows x |join_key_cols|
  Matrix features;                             // n x d_i
  std::optional<Vector> labels;                // present iff schema.label_col

  Index rows() const { return features.rows(); }
  void validate() const;
};

/// The union of an organization's horizontal partitions. Row identity is
/// positional: vertical row id = offsets[q] + local row.
struct VerticalTable {
  std::vector<HorizontalPartition> partitions;
  std::vector<Index> offsets;  // size Q_i + 1, offsets.back() == n_i

  static VerticalTable from_partitions(std::vector<HorizontalPartition> parts);

  const TableSchema& schema() const { return partitions.front().schema; }
  Index rows() const { return offsets.back(); }
  int client_count() const { return static_cast<int>(partitions.size()); }

  /// Maps a vertical row id to (partition index, local row).
  std::pair<int, Index> locate(Index row) const;

  const std::string& key(Index row, int key_col) const;
  double label(Index row) const;

  /// Concatenated n_i x d_i feature matrix (copies).
  Matrix all_features() const;
  /// Concatenated labels; only valid when the schema declares a label.
  Vector all_labels() const;
};

struct JoinPredicate {
  int left_table = 0;
  std::string left_col;
  int right_table = 0;
  std::string right_col;
};

/// A conjunctive equi-join over M vertical tables, each a union of
/// horizontal partitions.
struct Query {
  std::vector<VerticalTable> tables;
  std::vector<JoinPredicate> predicates;

  int table_count() const { return static_cast<int>(tables.size()); }
  int label_table() const;  // index of the (single) label-owning table

  /// Validates predicate columns, join-graph connectivity, and that exactly
  /// one table declares a label column.
  void validate() const;
};

}  // namespace rfl
