#include "rfl/mapping.hpp"

#include <algorithm>
#include <unordered_map>

namespace rfl {

std::uint64_t KeyMessage::byte_size() const {
  std::uint64_t bytes = 0;
  for (const auto& row : keys) {
    for (const auto& k : row) bytes += k.size();
  }
  bytes += row_ids.size() * 8;
  if (labels) bytes += labels->size() * 8;
  return bytes;
}

KeyMessage extract_key_columns(const HorizontalPartition& part, const KeyHash& hash) {
  KeyMessage msg;
  msg.owner = part.owner;
  msg.key_cols = part.schema.join_key_cols;
  msg.keys.reserve(part.rows());
  msg.row_ids.resize(part.rows());
  for (Index r = 0; r < part.rows(); ++r) {
    msg.row_ids[r] = r;
    std::vector<std::string> row;
    row.reserve(part.keys[r].size());
    for (const auto& k : part.keys[r]) {
      // Empty key cells stay empty: a row with a null key joins nothing.
      row.push_back(hash && !k.empty() ? hash(k) : k);
    }
    msg.keys.push_back(std::move(row));
  }
  if (part.labels) msg.labels = part.labels;
  return msg;
}

namespace {

// Per-table key columns after merging horizontal messages in partition order.
struct VerticalKeys {
  std::vector<std::string> key_cols;
  std::vector<std::vector<std::string>> columns;  // per key col: n_i values
  Index rows = 0;

  int col_index(const std::string& name) const {
    for (std::size_t c = 0; c < key_cols.size(); ++c) {
      if (key_cols[c] == name) return static_cast<int>(c);
    }
    return -1;
  }
};

std::vector<VerticalKeys> merge_messages(const Query& query,
                                         std::span<const KeyMessage> messages) {
  const int m = query.table_count();
  std::vector<VerticalKeys> merged(m);
  for (int i = 0; i < m; ++i) {
    merged[i].key_cols = query.tables[i].schema().join_key_cols;
    merged[i].columns.resize(merged[i].key_cols.size());
  }
  // One message per client, appended in partition order.
  for (int i = 0; i < m; ++i) {
    const VerticalTable& table = query.tables[i];
    for (int q = 0; q < table.client_count(); ++q) {
      const KeyMessage* msg = nullptr;
      for (const auto& candidate : messages) {
        if (candidate.owner == ClientId{i, q}) {
          msg = &candidate;
          break;
        }
      }
      if (!msg) {
        throw ProtocolError("missing key message from client (" + std::to_string(i) + "," +
                            std::to_string(q) + ")");
      }
      if (msg->rows() != table.partitions[q].rows()) {
        throw ProtocolError("key message from client (" + std::to_string(i) + "," +
                            std::to_string(q) + ") has wrong row count");
      }
      if (msg->key_cols != merged[i].key_cols) {
        throw SchemaError("key message from client (" + std::to_string(i) + "," +
                          std::to_string(q) + ") does not match the table's key columns");
      }
      for (Index r = 0; r < msg->rows(); ++r) {
        if (msg->keys[r].size() != merged[i].key_cols.size()) {
          throw SchemaError("key type mismatch: ragged key tuple from client (" +
                            std::to_string(i) + "," + std::to_string(q) + ")");
        }
        for (std::size_t c = 0; c < merged[i].key_cols.size(); ++c) {
          merged[i].columns[c].push_back(msg->keys[r][c]);
        }
      }
      merged[i].rows += msg->rows();
    }
  }
  return merged;
}

}  // namespace

MappingResult build_mapping(const Query& query, std::span<const KeyMessage> messages) {
  query.validate();
  const int m = query.table_count();
  auto merged = merge_messages(query, messages);

  // Hash-join pipeline over the connected join graph, greedily picking the
  // next predicate with an endpoint already joined; predicates whose both
  // endpoints are present act as filters.
  std::vector<bool> joined(m, false);
  std::vector<bool> used(query.predicates.size(), false);
  std::vector<std::vector<Index>> tuples;  // each of length m, -1 = not joined yet

  auto seed_table = [&](int t) {
    if (tuples.empty()) {
      tuples.reserve(merged[t].rows);
      for (Index r = 0; r < merged[t].rows; ++r) {
        std::vector<Index> tup(m, -1);
        tup[t] = r;
        tuples.push_back(std::move(tup));
      }
      joined[t] = true;
    }
  };

  std::size_t remaining = query.predicates.size();
  if (remaining == 0 && m == 1) seed_table(0);
  while (remaining > 0) {
    int pick = -1;
    for (std::size_t k = 0; k < query.predicates.size(); ++k) {
      if (used[k]) continue;
      const auto& p = query.predicates[k];
      bool any_seeded = std::any_of(joined.begin(), joined.end(), [](bool b) { return b; });
      if (!any_seeded || joined[p.left_table] || joined[p.right_table]) {
        pick = static_cast<int>(k);
        break;
      }
    }
    // Connectivity guarantees a pick exists.
    const auto& p = query.predicates[pick];
    used[pick] = true;
    --remaining;

    if (!joined[p.left_table] && !joined[p.right_table]) seed_table(p.left_table);

    const bool extend_right = !joined[p.right_table];
    const bool extend_left = !joined[p.left_table];
    if (!extend_left && !extend_right) {
      // Cycle edge: filter existing tuples on key equality.
      int lc = merged[p.left_table].col_index(p.left_col);
      int rc = merged[p.right_table].col_index(p.right_col);
      std::vector<std::vector<Index>> kept;
      kept.reserve(tuples.size());
      for (auto& tup : tuples) {
        const std::string& lk = merged[p.left_table].columns[lc][tup[p.left_table]];
        const std::string& rk = merged[p.right_table].columns[rc][tup[p.right_table]];
        if (!lk.empty() && lk == rk) kept.push_back(std::move(tup));
      }
      tuples = std::move(kept);
      continue;
    }

    const int build_table = extend_right ? p.right_table : p.left_table;
    const int probe_table = extend_right ? p.left_table : p.right_table;
    const std::string& build_col = extend_right ? p.right_col : p.left_col;
    const std::string& probe_col = extend_right ? p.left_col : p.right_col;

    int bc = merged[build_table].col_index(build_col);
    int pc = merged[probe_table].col_index(probe_col);

    std::unordered_map<std::string, std::vector<Index>> hash_table;
    hash_table.reserve(static_cast<std::size_t>(merged[build_table].rows));
    for (Index r = 0; r < merged[build_table].rows; ++r) {
      const std::string& k = merged[build_table].columns[bc][r];
      if (!k.empty()) hash_table[k].push_back(r);
    }

    std::vector<std::vector<Index>> next;
    for (const auto& tup : tuples) {
      const std::string& k = merged[probe_table].columns[pc][tup[probe_table]];
      if (k.empty()) continue;
      auto it = hash_table.find(k);
      if (it == hash_table.end()) continue;
      for (Index match : it->second) {
        auto extended = tup;
        extended[build_table] = match;
        next.push_back(std::move(extended));
      }
    }
    tuples = std::move(next);
    joined[build_table] = true;
  }

  // Canonical order: lexicographic by (p_1, ..., p_M).
  std::sort(tuples.begin(), tuples.end());

  MappingResult out;
  IndexMapping& map = out.mapping;
  map.joined_rows = static_cast<Index>(tuples.size());
  map.source_rows.assign(m, std::vector<Index>(tuples.size()));
  for (Index j = 0; j < map.joined_rows; ++j) {
    for (int i = 0; i < m; ++i) map.source_rows[i][j] = tuples[j][i];
  }

  // Server copy of the labels, gathered through the label table's mapping.
  const int lt = query.label_table();
  Vector vertical_labels(merged[lt].rows);
  {
    Index at = 0;
    const VerticalTable& table = query.tables[lt];
    for (int q = 0; q < table.client_count(); ++q) {
      const KeyMessage* msg = nullptr;
      for (const auto& candidate : messages) {
        if (candidate.owner == ClientId{lt, q}) msg = &candidate;
      }
      if (!msg->labels) {
        throw ProtocolError("label-owning client (" + std::to_string(lt) + "," +
                            std::to_string(q) + ") sent no labels");
      }
      vertical_labels.segment(at, msg->rows()) = *msg->labels;
      at += msg->rows();
    }
  }
  Vector y(map.joined_rows);
  for (Index j = 0; j < map.joined_rows; ++j) y(j) = vertical_labels(map.source_rows[lt][j]);
  map.labels = std::move(y);

  std::vector<Index> sizes;
  for (const auto& t : merged) sizes.push_back(t.rows);
  out.reverse = build_reverse(map, sizes);
  return out;
}

ReverseMapping build_reverse(const IndexMapping& mapping, std::span<const Index> table_rows) {
  ReverseMapping rev;
  rev.tables.resize(mapping.table_count());
  for (int i = 0; i < mapping.table_count(); ++i) {
    auto& t = rev.tables[i];
    t.groups.assign(static_cast<std::size_t>(table_rows[i]), {});
    t.counts = IntVector::Zero(table_rows[i]);
    for (Index j = 0; j < mapping.joined_rows; ++j) {
      Index src = mapping.source_rows[i][j];
      t.groups[src].push_back(j);
      t.counts(src) += 1;
    }
  }
  return rev;
}

MappingResult subset_mapping(const MappingResult& full, std::span<const Index> keep,
                             std::span<const Index> table_rows) {
  MappingResult out;
  IndexMapping& map = out.mapping;
  map.joined_rows = static_cast<Index>(keep.size());
  map.source_rows.assign(full.mapping.table_count(), std::vector<Index>(keep.size()));
  for (Index j = 0; j < map.joined_rows; ++j) {
    for (int i = 0; i < full.mapping.table_count(); ++i) {
      map.source_rows[i][j] = full.mapping.source_rows[i][keep[j]];
    }
  }
  if (full.mapping.labels) {
    Vector y(map.joined_rows);
    for (Index j = 0; j < map.joined_rows; ++j) y(j) = (*full.mapping.labels)(keep[j]);
    map.labels = std::move(y);
  }
  out.reverse = build_reverse(map, table_rows);
  return out;
}

Matrix gather_features(const VerticalTable& table, std::span<const Index> source_rows) {
  Matrix all = table.all_features();
  Matrix out(static_cast<Index>(source_rows.size()), all.cols());
  for (Index j = 0; j < out.rows(); ++j) out.row(j) = all.row(source_rows[j]);
  return out;
}

}  // namespace rfl
