#include "rfl/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rfl {

NetProfile NetProfile::preset(const std::string& name) {
  NetProfile p;
  if (name == "us-uk") {
    p.latency_s = 0.136;
    p.bandwidth_bps = 0.42e9;
  } else if (name == "us-us") {
    p.latency_s = 0.067;
    p.bandwidth_bps = 1.15e9;
  } else {
    throw ConfigError("unknown network preset '" + name + "' (expected us-uk or us-us)");
  }
  return p;
}

void NetProfile::validate() const {
  if (latency_s < 0 || !std::isfinite(latency_s)) throw ConfigError("latency must be >= 0");
  if (bandwidth_bps <= 0 || !std::isfinite(bandwidth_bps)) {
    throw ConfigError("bandwidth must be positive");
  }
}

const char* payload_kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::key_columns: return "key_columns";
    case PayloadKind::batch_request: return "batch_request";
    case PayloadKind::predictions: return "predictions";
    case PayloadKind::loss_derivatives: return "loss_derivatives";
    case PayloadKind::sgd_aggregate: return "sgd_aggregate";
    case PayloadKind::admm_combined: return "admm_combined";
    case PayloadKind::admm_aggregate: return "admm_aggregate";
    case PayloadKind::partial_gradient: return "partial_gradient";
    case PayloadKind::aggregated_gradient: return "aggregated_gradient";
    case PayloadKind::model_params: return "model_params";
    case PayloadKind::consensus_vars: return "consensus_vars";
  }
  return "unknown";
}

void NetLedger::record_round(std::span<const Payload> payloads, const NetProfile& profile) {
  profile.validate();
  rounds_ += 1;
  double transfer = 0.0;
  for (const auto& p : payloads) {
    total_bytes_ += p.bytes;
    bytes_by_link_[{p.src, p.dst}] += p.bytes;
    const double t = static_cast<double>(p.bytes) * 8.0 / profile.bandwidth_bps;
    transfer = profile.mode == NetProfile::Mode::sync_max ? std::max(transfer, t)
                                                          : transfer + t;
    payload_log_.push_back(p);
  }
  sim_time_s_ += profile.latency_s + transfer;
}

NetLedger::Snapshot NetLedger::current() const {
  return Snapshot{rounds_, total_bytes_, sim_time_s_, bytes_by_link_};
}

void NetLedger::begin_training() {
  setup_ = current();
  training_ = true;
}

void NetLedger::end_epoch() {
  if (!training_) begin_training();
  epochs_.push_back(current());
}

NetLedger::Snapshot NetLedger::epoch_delta(std::size_t epoch) const {
  const Snapshot& hi = epochs_.at(epoch);
  const Snapshot& lo = epoch == 0 ? setup_ : epochs_[epoch - 1];
  Snapshot d;
  d.rounds = hi.rounds - lo.rounds;
  d.bytes = hi.bytes - lo.bytes;
  d.sim_time_s = hi.sim_time_s - lo.sim_time_s;
  for (const auto& [link, bytes] : hi.bytes_by_link) {
    auto it = lo.bytes_by_link.find(link);
    std::uint64_t base = it == lo.bytes_by_link.end() ? 0 : it->second;
    if (bytes > base) d.bytes_by_link[link] = bytes - base;
  }
  return d;
}

namespace {

nlohmann::json snapshot_to_json(const NetLedger::Snapshot& s) {
  nlohmann::json links = nlohmann::json::array();
  for (const auto& [link, bytes] : s.bytes_by_link) {
    links.push_back({{"src", link.first}, {"dst", link.second}, {"bytes", bytes}});
  }
  return {{"rounds", s.rounds},
          {"bytes", s.bytes},
          {"sim_time_s", s.sim_time_s},
          {"links", links}};
}

NetLedger::Snapshot snapshot_from_json(const nlohmann::json& j) {
  NetLedger::Snapshot s;
  s.rounds = j.at("rounds").get<std::uint64_t>();
  s.bytes = j.at("bytes").get<std::uint64_t>();
  s.sim_time_s = j.at("sim_time_s").get<double>();
  for (const auto& l : j.at("links")) {
    s.bytes_by_link[{l.at("src").get<int>(), l.at("dst").get<int>()}] =
        l.at("bytes").get<std::uint64_t>();
  }
  return s;
}

}  // namespace

nlohmann::json NetLedger::to_json() const {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : epochs_) epochs.push_back(snapshot_to_json(e));
  return {{"total", snapshot_to_json(current())},
          {"setup", snapshot_to_json(setup_)},
          {"epochs", epochs},
          {"metadata", metadata}};
}

NetLedger NetLedger::from_json(const nlohmann::json& j) {
  NetLedger l;
  auto total = snapshot_from_json(j.at("total"));
  l.rounds_ = total.rounds;
  l.total_bytes_ = total.bytes;
  l.sim_time_s_ = total.sim_time_s;
  l.bytes_by_link_ = total.bytes_by_link;
  l.setup_ = snapshot_from_json(j.at("setup"));
  l.training_ = true;
  for (const auto& e : j.at("epochs")) l.epochs_.push_back(snapshot_from_json(e));
  if (j.contains("metadata")) l.metadata = j.at("metadata");
  return l;
}

std::string complexity_report(const NetLedger& ledger) {
  const auto& meta = ledger.metadata;
  std::ostringstream out;
  const std::string algo = meta.value("algo", "?");
  const std::uint64_t n = meta.value("joined_rows", std::uint64_t{0});
  const std::uint64_t batch = meta.value("batch", std::uint64_t{0});
  const std::uint64_t sum_n = meta.value("sum_table_rows", std::uint64_t{0});
  const int inner = meta.value("inner_rounds", 0);
  const int orgs = meta.value("organizations", 0);

  auto ceil_div = [](std::uint64_t a, std::uint64_t b) { return b ? (a + b - 1) / b : 0; };
  std::string predicted_rounds = "-";
  std::string predicted_bytes = "-";
  if (algo == "vfl-sgd") {
    predicted_rounds = std::to_string(ceil_div(n, batch)) + "  [ceil(N/B)]";
    predicted_bytes = "O(M*N) = O(" + std::to_string(orgs * n) + ")";
  } else if (algo == "rfl-sgd-v") {
    predicted_rounds = std::to_string(ceil_div(n, batch)) + "  [ceil(N/B)]";
    predicted_bytes = "O(sum a_i), a_i in [n_i, N]";
  } else if (algo == "vfl-admm") {
    predicted_rounds = "2  [gather + scatter]";
    predicted_bytes = "O(M*N) = O(" + std::to_string(orgs * n) + ")";
  } else if (algo == "rfl-admm-v") {
    predicted_rounds = "2  [gather + scatter]";
    predicted_bytes = "O(sum n_i) = O(" + std::to_string(sum_n) + ")";
  } else if (algo == "rfl-sgd") {
    predicted_rounds = std::to_string(3 * ceil_div(n, batch)) + "  [3*ceil(N/B)]";
    predicted_bytes = "O(sum a_i + Q*N/B)";
  } else if (algo == "rfl-admm") {
    predicted_rounds = std::to_string(2 + 2 * inner) + "  [2 + 2T']";
    predicted_bytes = "O(sum n_i + T'*Q)";
  } else if (algo == "centralized") {
    predicted_rounds = "0  [no communication]";
    predicted_bytes = "0";
  }

  out << "algorithm: " << algo << "\n";
  out << "training joined rows N=" << n << "  sum n_i=" << sum_n << "  batch B=" << batch;
  if (sum_n) {
    out << "  duplication N/sum(n_i)=" << static_cast<double>(n) / static_cast<double>(sum_n);
  }
  out << "\n\n";
  out << "epoch  rounds  bytes        sim_time_s   alpha(scatter rows)\n";
  for (std::size_t e = 0; e < ledger.epochs().size(); ++e) {
    auto d = ledger.epoch_delta(e);
    std::uint64_t alpha = 0;
    if (meta.contains("epoch_scatter_rows") && e < meta["epoch_scatter_rows"].size()) {
      // Per-organization scatter-row counts (the measured alpha_i).
      for (const auto& per_org : meta["epoch_scatter_rows"][e]) {
        alpha += per_org.get<std::uint64_t>();
      }
    }
    char line[128];
    std::snprintf(line, sizeof(line), "%-6zu %-7llu %-12llu %-12.6f %llu\n", e + 1,
                  static_cast<unsigned long long>(d.rounds),
                  static_cast<unsigned long long>(d.bytes), d.sim_time_s,
                  static_cast<unsigned long long>(alpha));
    out << line;
  }
  out << "\npredicted rounds/epoch: " << predicted_rounds << "\n";
  out << "predicted bytes/epoch:  " << predicted_bytes << "\n";
  return out.str();
}

}  // namespace rfl
