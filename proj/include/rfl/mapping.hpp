#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfl/schema.hpp"

namespace rfl {

/// Optional one-way hash applied to keys before they leave a client.
using KeyHash = std::function<std::string(std::string_view)>;

/// The <join_key, row_id> columns a client sends to the server, plus labels
/// when the client owns them. row_id is the 0-based local row index.
struct KeyMessage {
  ClientId owner;
  std::vector<std::string> key_cols;           // join key column names
  std::vector<std::vector<std::string>> keys;  // n x |key_cols|
  std::vector<Index> row_ids;                  // 0..n-1
  std::optional<Vector> labels;

  Index rows() const { return static_cast<Index>(row_ids.size()); }
  std::uint64_t byte_size() const;
};

KeyMessage extract_key_columns(const HorizontalPartition& part,
                               const KeyHash& hash = nullptr);

/// The logical joined table: p_i(j) gives the source row in vertical table i
/// for joined row j. Rows are in canonical lexicographic (p_1,...,p_M) order.
struct IndexMapping {
  Index joined_rows = 0;                        // N
  std::vector<std::vector<Index>> source_rows;  // M arrays, each length N
  std::optional<Vector> labels;                 // y, server copy

  int table_count() const { return static_cast<int>(source_rows.size()); }
};

/// For each table i, the joined rows each source row produced and their
/// multiplicities G_{i,j}. Unmatched source rows have empty groups.
struct ReverseMapping {
  struct Table {
    std::vector<std::vector<Index>> groups;  // n_i lists of joined-row ids
    IntVector counts;                        // n_i, counts(j) == groups[j].size()
  };
  std::vector<Table> tables;
};

struct MappingResult {
  IndexMapping mapping;
  ReverseMapping reverse;
};

/// Evaluates the multiway equi-join over key columns only, from one key
/// message per client. Joined rows come out in canonical lexicographic
/// order, so identical inputs give identical mappings.
MappingResult build_mapping(const Query& query, std::span<const KeyMessage> messages);

/// Derives the grouped inverse of `mapping` for tables of the given sizes.
ReverseMapping build_reverse(const IndexMapping& mapping, std::span<const Index> table_rows);

/// Restriction of a mapping to a subset of joined rows (reindexed 0..k-1;
/// source row ids are unchanged). `keep` must be sorted ascending.
MappingResult subset_mapping(const MappingResult& full, std::span<const Index> keep,
                             std::span<const Index> table_rows);

/// Materializes table i's joined feature block (N x d_i) by gathering
/// source rows through p_i. Baselines and oracles only.
Matrix gather_features(const VerticalTable& table, std::span<const Index> source_rows);

}  // namespace rfl
