#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "rfl/driver.hpp"
#include "rfl/mapping.hpp"
#include "rfl/sha256.hpp"
#include "rfl/synth.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& algo, int epochs, long seed,
            const std::string& out) {
  rfl::RunConfig cfg = rfl::RunConfig::from_file(config_path);
  if (!algo.empty()) cfg.algo = rfl::algo_from_name(algo);
  if (epochs > 0) cfg.epochs = epochs;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out.empty()) cfg.out_metrics = out;
  rfl::RunResult res = rfl::run(cfg);
  if (cfg.out_metrics.empty()) {
    std::cout << rfl::metrics_to_csv(res.metrics);
  } else {
    std::cout << "metrics written to " << cfg.out_metrics << "\n";
  }
  if (!cfg.out_ledger.empty()) std::cout << "ledger written to " << cfg.out_ledger << "\n";
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  if (!in) throw rfl::ConfigError("cannot open synth spec '" + spec_path + "'");
  rfl::SynthSpec spec = rfl::SynthSpec::from_json(nlohmann::json::parse(in));
  rfl::synth_to_dir(spec, out_dir);
  std::cout << "synthetic tables written to " << out_dir << "\n";
  return 0;
}

int cmd_map(const std::string& config_path) {
  rfl::RunConfig cfg = rfl::RunConfig::from_file(config_path);
  rfl::Query query = rfl::load_query(cfg);
  query.validate();
  rfl::KeyHash hash = nullptr;
  if (cfg.hash_keys) hash = [](std::string_view s) { return rfl::sha256_hex(s); };
  std::vector<rfl::KeyMessage> messages;
  for (int i = 0; i < query.table_count(); ++i) {
    for (const auto& part : query.tables[i].partitions) {
      messages.push_back(rfl::extract_key_columns(part, hash));
    }
  }
  rfl::MappingResult res = rfl::build_mapping(query, messages);
  const rfl::Index n = res.mapping.joined_rows;
  std::uint64_t sum_rows = 0;
  std::printf("joined rows N = %lld\n", static_cast<long long>(n));
  for (int i = 0; i < query.table_count(); ++i) {
    const auto& counts = res.reverse.tables[i].counts;
    const rfl::Index n_i = counts.size();
    sum_rows += static_cast<std::uint64_t>(n_i);
    rfl::Index unmatched = 0;
    for (rfl::Index j = 0; j < n_i; ++j) unmatched += counts(j) == 0 ? 1 : 0;
    std::printf("table %d (%s): n_i = %lld, max G = %d, unmatched = %lld\n", i,
                query.tables[i].schema().table_name.c_str(), static_cast<long long>(n_i),
                n_i > 0 ? counts.maxCoeff() : 0, static_cast<long long>(unmatched));
  }
  std::printf("sum n_i = %llu, duplication N/sum(n_i) = %.6g\n",
              static_cast<unsigned long long>(sum_rows),
              sum_rows ? static_cast<double>(n) / static_cast<double>(sum_rows) : 0.0);
  return 0;
}

int cmd_report(const std::string& ledger_path) {
  std::ifstream in(ledger_path);
  if (!in) throw rfl::ConfigError("cannot open ledger '" + ledger_path + "'");
  rfl::NetLedger ledger = rfl::NetLedger::from_json(nlohmann::json::parse(in));
  std::cout << rfl::complexity_report(ledger);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated training over relational tables without materializing the join"};
  app.require_subcommand(1);

  std::string config_path, algo, out, spec_path, out_dir, ledger_path;
  int epochs = 0;
  long seed = -1;

  auto* run_cmd = app.add_subcommand("run", "train with a run config");
  run_cmd->add_option("--config", config_path, "run config JSON")->required();
  run_cmd->add_option("--algo", algo, "override the configured algorithm");
  run_cmd->add_option("--epochs", epochs, "override the epoch count");
  run_cmd->add_option("--seed", seed, "override the seed");
  run_cmd->add_option("--out", out, "metrics CSV path");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic star schema");
  synth_cmd->add_option("--spec", spec_path, "synth spec JSON")->required();
  synth_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  auto* map_cmd = app.add_subcommand("map", "build the join mapping and print stats");
  map_cmd->add_option("--config", config_path, "run config JSON")->required();

  auto* report_cmd = app.add_subcommand("report", "complexity report from a saved ledger");
  report_cmd->add_option("--ledger", ledger_path, "ledger JSON")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run_cmd->parsed()) return cmd_run(config_path, algo, epochs, seed, out);
    if (synth_cmd->parsed()) return cmd_synth(spec_path, out_dir);
    if (map_cmd->parsed()) return cmd_map(config_path);
    if (report_cmd->parsed()) return cmd_report(ledger_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
