#include "rfl/synth.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rfl/csv.hpp"
#include "rfl/rng.hpp"

namespace rfl {
namespace {

std::string key_name(int table, Index k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "k%d_%06" PRIdMAX, table, static_cast<std::intmax_t>(k));
  return buf;
}

std::vector<HorizontalPartition> split_rows(const TableSchema& schema, int org,
                                            int client_count,
                                            const std::vector<std::vector<std::string>>& keys,
                                            const Matrix& features, const Vector* labels) {
  const Index n = features.rows();
  std::vector<HorizontalPartition> parts;
  Index at = 0;
  for (int q = 0; q < client_count; ++q) {
    const Index len = n / client_count + (q < n % client_count ? 1 : 0);
    HorizontalPartition p;
    p.owner = ClientId{org, q};
    p.schema = schema;
    p.keys.assign(keys.begin() + at, keys.begin() + at + len);
    p.features = features.middleRows(at, len);
    if (labels) p.labels = labels->segment(at, len);
    parts.push_back(std::move(p));
    at += len;
  }
  return parts;
}

}  // namespace

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.orgs = j.value("orgs", 2);
  if (j.contains("clients")) s.clients = j.at("clients").get<std::vector<int>>();
  if (j.contains("rows")) s.rows = j.at("rows").get<std::vector<Index>>();
  if (j.contains("features")) s.features = j.at("features").get<std::vector<Index>>();
  s.duplication = j.value("duplication", 1);
  s.class_count = j.value("class_count", 1);
  s.noise = j.value("noise", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

void SynthSpec::validate() const {
  if (orgs < 1) throw ConfigError("synth: orgs must be >= 1");
  if (static_cast<int>(rows.size()) != orgs || static_cast<int>(features.size()) != orgs) {
    throw ConfigError("synth: rows/features must list one entry per organization");
  }
  if (!clients.empty() && static_cast<int>(clients.size()) != orgs) {
    throw ConfigError("synth: clients must list one entry per organization");
  }
  for (Index n : rows) {
    if (n < 1) throw ConfigError("synth: table sizes must be positive");
  }
  for (Index d : features) {
    if (d < 1) throw ConfigError("synth: feature counts must be positive");
  }
  if (class_count < 1) throw ConfigError("synth: class_count must be >= 1");
  if (duplication < 1) throw ConfigError("synth: duplication must be >= 1");
  if (orgs == 1 && duplication != 1) {
    throw ConfigError("infeasible duplication factor: a single table cannot duplicate rows");
  }
  if (orgs > 1 && rows[1] % duplication != 0) {
    throw ConfigError("infeasible duplication factor: " + std::to_string(duplication) +
                      " does not divide the first dimension table's size " +
                      std::to_string(rows[1]));
  }
}

SynthResult synth(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, {0x73796e74});  // "synt"
  const int m = spec.orgs;
  const int d_c = spec.class_count;
  std::vector<int> clients = spec.clients.empty() ? std::vector<int>(m, 1) : spec.clients;

  // Ground-truth linear model over the concatenated features, scaled so the
  // aggregated prediction stays O(1).
  const double d_total = static_cast<double>(std::accumulate(spec.features.begin(),
                                                             spec.features.end(), Index{0}));
  const double scale = (d_c > 1 ? 3.0 : 1.0) / std::sqrt(d_total);
  std::vector<Matrix> truth(m);
  for (int i = 0; i < m; ++i) {
    truth[i].resize(spec.features[i], d_c);
    for (Index r = 0; r < truth[i].rows(); ++r) {
      for (Index c = 0; c < d_c; ++c) truth[i](r, c) = scale * rng.gaussian();
    }
  }

  // Dimension tables: distinct keys with iid features; the first dimension
  // repeats each key `duplication` times and the copies share features.
  struct Dim {
    std::vector<std::string> keys;            // per row
    std::vector<std::string> distinct_keys;   // per key
    Matrix features;                          // per row
    Matrix key_features;                      // per distinct key
  };
  std::vector<Dim> dims(m > 1 ? m - 1 : 0);
  for (int t = 1; t < m; ++t) {
    Dim& dim = dims[t - 1];
    const Index n = spec.rows[t];
    const int repeat = t == 1 ? spec.duplication : 1;
    const Index k = n / repeat;
    dim.key_features.resize(k, spec.features[t]);
    for (Index r = 0; r < k; ++r) {
      dim.distinct_keys.push_back(key_name(t, r));
      for (Index c = 0; c < spec.features[t]; ++c) dim.key_features(r, c) = rng.gaussian();
    }
    dim.features.resize(n, spec.features[t]);
    for (Index r = 0; r < n; ++r) {
      dim.keys.push_back(dim.distinct_keys[r % k]);
      dim.features.row(r) = dim.key_features.row(r % k);
    }
  }

  // Fact table: balanced foreign keys via a seeded permutation, so key usage
  // is exactly uniform (and bijective when sizes match).
  const Index n_fact = spec.rows[0];
  Matrix fact_features(n_fact, spec.features[0]);
  for (Index r = 0; r < n_fact; ++r) {
    for (Index c = 0; c < spec.features[0]; ++c) fact_features(r, c) = rng.gaussian();
  }
  std::vector<std::vector<std::string>> fact_keys(n_fact);
  std::vector<std::vector<Index>> fk(m > 1 ? m - 1 : 0);
  for (int t = 1; t < m; ++t) {
    std::vector<Index> perm(n_fact);
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm.begin(), perm.end());
    fk[t - 1].resize(n_fact);
    const Index k = static_cast<Index>(dims[t - 1].distinct_keys.size());
    for (Index r = 0; r < n_fact; ++r) fk[t - 1][r] = perm[r] % k;
  }
  for (Index r = 0; r < n_fact; ++r) {
    for (int t = 1; t < m; ++t) fact_keys[r].push_back(dims[t - 1].distinct_keys[fk[t - 1][r]]);
  }

  // Labels on the fact table from the joined feature vector. Duplicated
  // dimension rows share features, so the label is consistent across all of
  // a fact row's joined duplicates.
  Vector labels(n_fact);
  for (Index r = 0; r < n_fact; ++r) {
    Eigen::RowVectorXd z = fact_features.row(r) * truth[0];
    for (int t = 1; t < m; ++t) z += dims[t - 1].key_features.row(fk[t - 1][r]) * truth[t];
    if (d_c == 1) {
      labels(r) = z(0) + spec.noise * rng.gaussian();
    } else {
      Index best = 0;
      double best_value = -1e300;
      for (Index c = 0; c < d_c; ++c) {
        double v = z(c) + spec.noise * rng.gaussian();
        if (v > best_value) {
          best_value = v;
          best = c;
        }
      }
      labels(r) = static_cast<double>(best);
    }
  }

  SynthResult out;
  out.true_params = truth;

  // Fact schema: label owner with one foreign key per dimension.
  TableSchema fact_schema;
  fact_schema.table_name = "t0";
  for (int t = 1; t < m; ++t) fact_schema.join_key_cols.push_back("fk" + std::to_string(t));
  for (Index c = 0; c < spec.features[0]; ++c) {
    fact_schema.feature_cols.push_back("x0_" + std::to_string(c));
  }
  fact_schema.label_col = "y";
  fact_schema.class_count = d_c;
  out.query.tables.push_back(VerticalTable::from_partitions(
      split_rows(fact_schema, 0, clients[0], fact_keys, fact_features, &labels)));

  for (int t = 1; t < m; ++t) {
    TableSchema schema;
    schema.table_name = "t" + std::to_string(t);
    schema.join_key_cols = {"key"};
    for (Index c = 0; c < spec.features[t]; ++c) {
      schema.feature_cols.push_back("x" + std::to_string(t) + "_" + std::to_string(c));
    }
    schema.class_count = d_c;
    std::vector<std::vector<std::string>> keys;
    for (const auto& k : dims[t - 1].keys) keys.push_back({k});
    out.query.tables.push_back(VerticalTable::from_partitions(
        split_rows(schema, t, clients[t], keys, dims[t - 1].features, nullptr)));
    out.query.predicates.push_back(
        JoinPredicate{0, "fk" + std::to_string(t), t, "key"});
  }
  out.query.validate();
  return out;
}

void synth_to_dir(const SynthSpec& spec, const std::string& dir) {
  SynthResult res = synth(spec);
  std::filesystem::create_directories(dir);

  nlohmann::json tables = nlohmann::json::array();
  for (int i = 0; i < res.query.table_count(); ++i) {
    const VerticalTable& table = res.query.tables[i];
    const TableSchema& schema = table.schema();
    nlohmann::json csvs = nlohmann::json::array();
    for (int q = 0; q < table.client_count(); ++q) {
      const HorizontalPartition& p = table.partitions[q];
      std::vector<std::vector<std::string>> records;
      std::vector<std::string> header = schema.join_key_cols;
      header.insert(header.end(), schema.feature_cols.begin(), schema.feature_cols.end());
      if (schema.has_label()) header.push_back(*schema.label_col);
      records.push_back(header);
      for (Index r = 0; r < p.rows(); ++r) {
        std::vector<std::string> rec = p.keys[r];
        for (Index c = 0; c < p.features.cols(); ++c) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.17g", p.features(r, c));
          rec.push_back(buf);
        }
        if (p.labels) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.17g", (*p.labels)(r));
          rec.push_back(buf);
        }
        records.push_back(std::move(rec));
      }
      std::string name = "t" + std::to_string(i) + "_p" + std::to_string(q) + ".csv";
      write_csv(dir + "/" + name, records);
      csvs.push_back(name);
    }
    nlohmann::json t = {{"name", schema.table_name},
                        {"csv", csvs},
                        {"join_keys", schema.join_key_cols},
                        {"features", schema.feature_cols},
                        {"classes", schema.class_count}};
    if (schema.has_label()) t["label"] = *schema.label_col;
    tables.push_back(t);
  }

  nlohmann::json predicates = nlohmann::json::array();
  for (const auto& p : res.query.predicates) {
    predicates.push_back({{"left", p.left_table},
                          {"left_col", p.left_col},
                          {"right", p.right_table},
                          {"right_col", p.right_col}});
  }

  nlohmann::json truth = nlohmann::json::array();
  for (const auto& t : res.true_params) {
    nlohmann::json cols = nlohmann::json::array();
    for (Index c = 0; c < t.cols(); ++c) {
      nlohmann::json col = nlohmann::json::array();
      for (Index r = 0; r < t.rows(); ++r) col.push_back(t(r, c));
      cols.push_back(col);
    }
    truth.push_back(cols);
  }
  std::ofstream truth_out(dir + "/ground_truth.json");
  truth_out << nlohmann::json{{"true_params", truth}}.dump(2) << "\n";

  nlohmann::json config = {
      {"tables", tables},
      {"predicates", predicates},
      {"algo", "rfl-admm-v"},
      {"model", {{"kind", "linear"}, {"bias", "none"}}},
      {"loss",
       {{"kind", spec.class_count > 1 ? "softmax_cross_entropy" : "squared"},
        {"reg", "l2"},
        {"beta", 0.01}}},
      {"epochs", 10},
      {"seed", spec.seed},
      {"net", "us-uk"},
      {"out", {{"metrics", "metrics.csv"}, {"ledger", "ledger.json"}}}};
  std::ofstream config_out(dir + "/config.json");
  config_out << config.dump(2) << "\n";
}

}  // namespace rfl
