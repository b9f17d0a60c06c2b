#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rfl/types.hpp"

#include "json.hpp"

namespace rfl {

/// A single latency/bandwidth profile for all links, with two readings of a
/// synchronous round: transfers proceed in parallel and the round completes
/// at the slowest (sync_max, default), or transfers are serialized (sum).
struct NetProfile {
  double latency_s = 0.0;
  double bandwidth_bps = 1.0;
  enum class Mode { sync_max, sum } mode = Mode::sync_max;

  /// Named presets: "us-uk" (0.136 s, 0.42 Gbps), "us-us" (0.067 s, 1.15 Gbps).
  static NetProfile preset(const std::string& name);
  void validate() const;
};

/// Node ids for byte accounting. Clients are numbered from 1; organization
/// coordinators (when enabled) follow the clients.
constexpr int kServerNode = 0;
constexpr int kBroadcastNode = -1;

enum class PayloadKind {
  key_columns,
  batch_request,
  predictions,
  loss_derivatives,      // per-joined-row dl/dz (unoptimized scatter)
  sgd_aggregate,         // sparse (row, count, value) lists
  admm_combined,         // per-joined-row lambda + rho * (sum h - z)
  admm_aggregate,        // per-source-row Y (+ counts on first epoch)
  partial_gradient,
  aggregated_gradient,
  model_params,
  consensus_vars,
};

const char* payload_kind_name(PayloadKind kind);

struct Payload {
  int src = 0;
  int dst = 0;
  std::uint64_t bytes = 0;
  PayloadKind kind = PayloadKind::predictions;
  bool dp_protected = false;
};

/// Exact per-link byte and round accounting plus the simulated-time model
/// time += latency + transfer_time per round. Rounds recorded before
/// begin_training() land in a setup bucket; end_epoch() snapshots the
/// cumulative training-phase counters.
class NetLedger {
 public:
  struct Snapshot {
    std::uint64_t rounds = 0;
    std::uint64_t bytes = 0;
    double sim_time_s = 0.0;
    std::map<std::pair<int, int>, std::uint64_t> bytes_by_link;
  };

  void record_round(std::span<const Payload> payloads, const NetProfile& profile);

  void begin_training();
  void end_epoch();

  std::uint64_t rounds() const { return rounds_; }
  std::uint64_t total_bytes() const { return total_bytes_; }
  double sim_time_s() const { return sim_time_s_; }
  const std::map<std::pair<int, int>, std::uint64_t>& bytes_by_link() const {
    return bytes_by_link_;
  }
  const std::vector<Snapshot>& epochs() const { return epochs_; }
  const Snapshot& setup() const { return setup_; }
  const std::vector<Payload>& payload_log() const { return payload_log_; }

  /// Training-phase deltas for one epoch (0-based).
  Snapshot epoch_delta(std::size_t epoch) const;

  nlohmann::json to_json() const;
  static NetLedger from_json(const nlohmann::json& j);

  /// Free-form run metadata carried into the ledger file for reporting.
  nlohmann::json metadata;

 private:
  Snapshot current() const;

  std::uint64_t rounds_ = 0;
  std::uint64_t total_bytes_ = 0;
  double sim_time_s_ = 0.0;
  std::map<std::pair<int, int>, std::uint64_t> bytes_by_link_;
  Snapshot setup_;
  bool training_ = false;
  std::vector<Snapshot> epochs_;
  std::vector<Payload> payload_log_;
};

/// Measured rounds/bytes per epoch next to the closed-form predictions for
/// the configured algorithm, rendered as an aligned text table.
std::string complexity_report(const NetLedger& ledger);

}  // namespace rfl
