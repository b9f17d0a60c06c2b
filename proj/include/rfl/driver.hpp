#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rfl/centralized.hpp"
#include "rfl/mapping.hpp"
#include "rfl/netsim.hpp"
#include "rfl/privacy.hpp"
#include "rfl/synth.hpp"

namespace rfl {

enum class Algo {
  centralized,
  vfl_sgd,
  vfl_admm,
  rfl_sgd_v,
  rfl_admm_v,
  rfl_sgd,
  rfl_admm,
};

Algo algo_from_name(const std::string& name);
const char* algo_name(Algo algo);

enum class BiasMode { none, first };  // at most one organization carries a bias

struct TableConfig {
  TableSchema schema;
  std::vector<std::string> partition_csvs;
};

struct RunConfig {
  std::vector<TableConfig> tables;
  std::vector<JoinPredicate> predicates;

  Algo algo = Algo::rfl_admm_v;
  ModelKind model_kind = ModelKind::linear;
  Index hidden = 16;
  BiasMode bias = BiasMode::first;
  LossSpec loss;

  int epochs = 10;
  Index batch = 0;  // 0: min(10000, max(1, N/10))
  double eta = 0.1;
  double rho = 1.0;
  double rho_h = 0.0;  // 0: same as rho
  int inner_rounds = 10;  // T'
  int local_steps = 20;   // S
  double eta_local = 0.1;

  DpConfig dp;
  NetProfile net = NetProfile::preset("us-uk");
  std::string net_preset = "us-uk";

  std::uint64_t seed = 0;
  double test_fraction = 0.15;
  bool hash_keys = false;
  bool org_coordinator = false;
  // w-update proximal coefficient uses the organization count by default;
  // this substitutes the per-organization partition count.
  bool w_update_partition_count = false;

  std::string out_metrics;
  std::string out_ledger;
  std::string out_checkpoint_dir;

  // Test instrumentation (not part of the config file): record concatenated
  // per-organization parameters after every epoch.
  bool trace_params = false;

  /// Parses the documented JSON config; relative CSV paths resolve against
  /// `base_dir` (typically the config file's directory).
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static RunConfig from_file(const std::string& path);
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_metric = 0.0;     // accuracy (classification) or RMSE (regression)
  std::uint64_t comm_rounds = 0;  // cumulative, training phase
  std::uint64_t comm_bytes = 0;
  double sim_time_s = 0.0;
  double eps_label = 0.0;    // 0 when label DP is off
  double eps_feature = 0.0;  // 0 when feature DP is off
};

std::string metrics_to_csv(std::span<const EpochMetrics> metrics);
void write_metrics_csv(const std::string& path, std::span<const EpochMetrics> metrics);

struct RunResult {
  std::vector<EpochMetrics> metrics;
  // Client models keyed by (organization, partition); -V algorithms and the
  // baselines hold one merged client per organization.
  std::vector<std::vector<LocalModel>> models;
  NetLedger ledger;
  Index joined_rows = 0;        // N over the full mapping
  Index train_rows = 0;
  std::vector<Index> table_rows;
  std::vector<std::vector<Vector>> param_trace;  // per epoch when trace_params
};

/// Loads the config's CSV partitions into an in-memory query.
Query load_query(const RunConfig& cfg);

/// Runs the configured algorithm end to end: mapping build, outer
/// gather/compute/scatter rounds, inner consensus rounds, DP at the label
/// and client-update injection points, exact byte/round accounting, and
/// per-epoch metrics on a held-out split of the joined rows.
RunResult run(const RunConfig& cfg);

/// Same, over an in-memory query (tests and the synth path).
RunResult run(const RunConfig& cfg, const Query& query);

/// Test metric on the given joined rows: predictions are summed across
/// organizations per row; classification scores argmax agreement,
/// regression scores RMSE.
double evaluate(const std::vector<Matrix>& source_predictions, const IndexMapping& mapping,
                std::span<const Index> rows, const Vector& labels, LossKind kind);

}  // namespace rfl
