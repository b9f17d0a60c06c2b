#include "rfl/driver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rfl/consensus.hpp"
#include "rfl/csv.hpp"
#include "rfl/join_server.hpp"
#include "rfl/sha256.hpp"

namespace rfl {

Algo algo_from_name(const std::string& name) {
  if (name == "centralized") return Algo::centralized;
  if (name == "vfl-sgd") return Algo::vfl_sgd;
  if (name == "vfl-admm") return Algo::vfl_admm;
  if (name == "rfl-sgd-v") return Algo::rfl_sgd_v;
  if (name == "rfl-admm-v") return Algo::rfl_admm_v;
  if (name == "rfl-sgd") return Algo::rfl_sgd;
  if (name == "rfl-admm") return Algo::rfl_admm;
  throw ConfigError("unknown algorithm '" + name + "'");
}

const char* algo_name(Algo algo) {
  switch (algo) {
    case Algo::centralized: return "centralized";
    case Algo::vfl_sgd: return "vfl-sgd";
    case Algo::vfl_admm: return "vfl-admm";
    case Algo::rfl_sgd_v: return "rfl-sgd-v";
    case Algo::rfl_admm_v: return "rfl-admm-v";
    case Algo::rfl_sgd: return "rfl-sgd";
    case Algo::rfl_admm: return "rfl-admm";
  }
  return "?";
}

namespace {

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "squared") return LossKind::squared;
  if (name == "softmax_cross_entropy") return LossKind::softmax_cross_entropy;
  if (name == "logistic") return LossKind::logistic;
  throw ConfigError("unknown loss kind '" + name + "'");
}

std::string resolve_path(const std::string& base, const std::string& path) {
  if (base.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base) / path).string();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  RunConfig cfg;
  if (j.contains("tables")) {
    for (const auto& t : j.at("tables")) {
      TableConfig tc;
      tc.schema.table_name = t.value("name", "");
      tc.schema.join_key_cols = t.value("join_keys", std::vector<std::string>{});
      tc.schema.feature_cols = t.at("features").get<std::vector<std::string>>();
      if (t.contains("label")) tc.schema.label_col = t.at("label").get<std::string>();
      tc.schema.class_count = t.value("classes", 1);
      for (const auto& c : t.at("csv")) {
        tc.partition_csvs.push_back(resolve_path(base_dir, c.get<std::string>()));
      }
      cfg.tables.push_back(std::move(tc));
    }
  }
  if (j.contains("predicates")) {
    for (const auto& p : j.at("predicates")) {
      cfg.predicates.push_back(JoinPredicate{p.at("left").get<int>(),
                                             p.at("left_col").get<std::string>(),
                                             p.at("right").get<int>(),
                                             p.at("right_col").get<std::string>()});
    }
  }
  cfg.algo = algo_from_name(j.value("algo", "rfl-admm-v"));
  if (j.contains("model")) {
    const auto& mj = j.at("model");
    const std::string kind = mj.value("kind", "linear");
    if (kind == "linear") {
      cfg.model_kind = ModelKind::linear;
    } else if (kind == "mlp") {
      cfg.model_kind = ModelKind::mlp;
    } else {
      throw ConfigError("unknown model kind '" + kind + "'");
    }
    cfg.hidden = mj.value("hidden", Index{16});
    const std::string bias = mj.value("bias", "first");
    if (bias == "none") {
      cfg.bias = BiasMode::none;
    } else if (bias == "first") {
      cfg.bias = BiasMode::first;
    } else {
      throw ConfigError("model.bias must be 'none' or 'first'");
    }
  }
  if (j.contains("loss")) {
    const auto& lj = j.at("loss");
    cfg.loss.kind = loss_kind_from_name(lj.value("kind", "squared"));
    const std::string reg = lj.value("reg", "none");
    if (reg == "none") {
      cfg.loss.reg = RegKind::none;
    } else if (reg == "l2") {
      cfg.loss.reg = RegKind::l2;
    } else {
      throw ConfigError("loss.reg must be 'none' or 'l2'");
    }
    cfg.loss.beta = lj.value("beta", 0.0);
  }
  cfg.epochs = j.value("epochs", 10);
  cfg.batch = j.value("batch", Index{0});
  cfg.eta = j.value("eta", 0.1);
  cfg.rho = j.value("rho", 1.0);
  cfg.rho_h = j.value("rho_h", 0.0);
  cfg.inner_rounds = j.value("inner_rounds", 10);
  cfg.local_steps = j.value("local_steps", 20);
  cfg.eta_local = j.value("eta_local", 0.1);
  if (j.contains("dp")) {
    const auto& dj = j.at("dp");
    cfg.dp.label_lambda = dj.value("label_lambda", 0.0);
    cfg.dp.clip_c = dj.value("clip_c", 1.0);
    cfg.dp.sigma = dj.value("sigma", 0.0);
    cfg.dp.delta = dj.value("delta", 1e-5);
    cfg.dp.subsample_r = dj.value("subsample_r", 0.0);
  }
  cfg.net_preset = j.value("net", "us-uk");
  cfg.net = NetProfile::preset(cfg.net_preset);
  if (j.value("net_mode", "sync_max") == "sum") cfg.net.mode = NetProfile::Mode::sum;
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.test_fraction = j.value("test_fraction", 0.15);
  cfg.hash_keys = j.value("hash_keys", false);
  cfg.org_coordinator = j.value("org_coordinator", false);
  cfg.w_update_partition_count = j.value("w_update_partition_count", false);
  if (j.contains("out")) {
    const auto& oj = j.at("out");
    if (oj.contains("metrics")) cfg.out_metrics = resolve_path(base_dir, oj.at("metrics"));
    if (oj.contains("ledger")) cfg.out_ledger = resolve_path(base_dir, oj.at("ledger"));
    if (oj.contains("checkpoint_dir")) {
      cfg.out_checkpoint_dir = resolve_path(base_dir, oj.at("checkpoint_dir"));
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  return from_json(j, std::filesystem::path(path).parent_path().string());
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (eta <= 0 || eta_local <= 0) throw ConfigError("step sizes must be positive");
  if (rho <= 0) throw ConfigError("rho must be positive");
  if (rho_h < 0) throw ConfigError("rho_h must be >= 0");
  if (test_fraction < 0 || test_fraction >= 1) {
    throw ConfigError("test_fraction must lie in [0, 1)");
  }
  if (algo == Algo::rfl_admm && inner_rounds < 1) {
    throw ConfigError("rfl-admm requires inner_rounds >= 1");
  }
  if (local_steps < 1) throw ConfigError("local_steps must be >= 1");
  dp.validate();
}

std::string metrics_to_csv(std::span<const EpochMetrics> metrics) {
  std::string out =
      "epoch,train_loss,test_metric,comm_rounds,comm_bytes,sim_time_s,eps_label,eps_feature\n";
  char line[256];
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%llu,%llu,%.17g,%.17g,%.17g\n", m.epoch,
                  m.train_loss, m.test_metric, static_cast<unsigned long long>(m.comm_rounds),
                  static_cast<unsigned long long>(m.comm_bytes), m.sim_time_s, m.eps_label,
                  m.eps_feature);
    out += line;
  }
  return out;
}

void write_metrics_csv(const std::string& path, std::span<const EpochMetrics> metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write metrics file '" + path + "'");
  out << metrics_to_csv(metrics);
}

double evaluate(const std::vector<Matrix>& source_predictions, const IndexMapping& mapping,
                std::span<const Index> rows, const Vector& labels, LossKind kind) {
  if (rows.empty()) return 0.0;
  const Index d_c = source_predictions.front().cols();
  double acc = 0.0;
  for (Index r : rows) {
    Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(d_c);
    for (int i = 0; i < mapping.table_count(); ++i) {
      z += source_predictions[i].row(mapping.source_rows[i][r]);
    }
    switch (kind) {
      case LossKind::squared:
        acc += (z(0) - labels(r)) * (z(0) - labels(r));
        break;
      case LossKind::logistic:
        acc += ((z(0) > 0.0 ? 1.0 : 0.0) == labels(r)) ? 1.0 : 0.0;
        break;
      case LossKind::softmax_cross_entropy: {
        Index best = 0;
        z.maxCoeff(&best);
        acc += (static_cast<double>(best) == labels(r)) ? 1.0 : 0.0;
        break;
      }
    }
  }
  const double mean = acc / static_cast<double>(rows.size());
  return kind == LossKind::squared ? std::sqrt(mean) : mean;
}

namespace {

constexpr std::uint64_t kTagSplit = 0x73706c74;
constexpr std::uint64_t kTagLabelDp = 0x6c626470;
constexpr std::uint64_t kTagFeatureDp = 0x66656470;
constexpr std::uint64_t kTagModelInit = 0x6d696e69;

struct ClientRt {
  Index begin = 0;
  Index rows = 0;
  LocalModel model;
  int node = 0;
};

struct OrgRt {
  Matrix features;  // n_i x d_i
  std::vector<ClientRt> clients;
  int coord = kServerNode;
  Index rows() const { return features.rows(); }
};

bool is_sgd(Algo a) {
  return a == Algo::vfl_sgd || a == Algo::rfl_sgd_v || a == Algo::rfl_sgd;
}
bool merged_clients(Algo a) { return a != Algo::rfl_sgd && a != Algo::rfl_admm; }

struct Driver {
  const RunConfig& cfg;
  const Query& query;
  LossSpec loss;
  Index d_c = 1;
  int m = 0;
  std::vector<OrgRt> orgs;
  std::vector<Index> table_rows;
  MappingResult full;
  std::vector<Index> train_ids, test_ids;
  MappingResult train;
  Vector y_clean;
  double eps_label = 0.0;
  Index batch_size = 0;
  NetLedger ledger;
  std::vector<EpochMetrics> metrics;
  std::vector<std::vector<Vector>> trace;
  std::vector<std::vector<std::uint64_t>> epoch_scatter_rows;
  std::vector<std::uint64_t> cur_scatter_rows;
  long dp_steps = 0;  // local DP steps per client so far
  double dp_ratio = 1.0;
  int current_epoch = -1;

  Driver(const RunConfig& c, const Query& q) : cfg(c), query(q), loss(c.loss) {}

  const Vector& y_train() const { return *train.mapping.labels; }
  Index n_train() const { return train.mapping.joined_rows; }

  void setup() {
    cfg.validate();
    query.validate();
    m = query.table_count();
    d_c = query.tables[query.label_table()].schema().class_count;
    loss.validate(d_c);

    // Client layout: merged per organization for the baselines and -V
    // algorithms, per horizontal partition otherwise.
    int node = 0;
    for (int i = 0; i < m; ++i) {
      const VerticalTable& table = query.tables[i];
      OrgRt org;
      org.features = table.all_features();
      ModelSpec spec;
      spec.kind = cfg.model_kind;
      spec.input_dim = table.schema().feature_count();
      spec.output_dim = d_c;
      spec.hidden = cfg.hidden;
      spec.bias = cfg.bias == BiasMode::first && i == 0;
      spec.rng_seed = Rng(cfg.seed, {kTagModelInit, static_cast<std::uint64_t>(i)}).next_u64();
      LocalModel init = LocalModel::init(spec);
      if (merged_clients(cfg.algo)) {
        org.clients.push_back(ClientRt{0, org.rows(), init, ++node});
      } else {
        for (int q = 0; q < table.client_count(); ++q) {
          org.clients.push_back(ClientRt{table.offsets[q], table.partitions[q].rows(), init,
                                         ++node});
        }
      }
      orgs.push_back(std::move(org));
      table_rows.push_back(table.rows());
    }
    const int total_clients = node;
    for (int i = 0; i < m; ++i) {
      orgs[i].coord = cfg.org_coordinator ? total_clients + 1 + i : kServerNode;
    }

    // Mapping phase: each partition sends its <join_key, row_id> columns
    // (and labels, perturbed first when label DP is on).
    KeyHash hash = nullptr;
    if (cfg.hash_keys) hash = [](std::string_view s) { return sha256_hex(s); };
    std::vector<KeyMessage> messages;
    std::vector<Payload> setup_payloads;
    int part_node = 0;
    for (int i = 0; i < m; ++i) {
      for (int q = 0; q < query.tables[i].client_count(); ++q) {
        const HorizontalPartition& part = query.tables[i].partitions[q];
        KeyMessage msg = extract_key_columns(part, hash);
        ++part_node;
        if (msg.labels && cfg.dp.label_dp()) {
          Rng rng(cfg.seed, {kTagLabelDp, static_cast<std::uint64_t>(i),
                             static_cast<std::uint64_t>(q)});
          auto perturbed =
              perturb_labels(*msg.labels, loss.label_classes(d_c), cfg.dp.label_lambda, rng);
          msg.labels = std::move(perturbed.labels);
        }
        setup_payloads.push_back(
            Payload{part_node, kServerNode, msg.byte_size(), PayloadKind::key_columns});
        messages.push_back(std::move(msg));
      }
    }
    eps_label = cfg.dp.label_dp() ? label_epsilon(cfg.dp.label_lambda) : 0.0;
    ledger.record_round(setup_payloads, cfg.net);
    full = build_mapping(query, messages);

    // Clean joined labels, kept simulation-side for test metrics.
    {
      const int lt = query.label_table();
      Vector source = query.tables[lt].all_labels();
      y_clean.resize(full.mapping.joined_rows);
      for (Index j = 0; j < full.mapping.joined_rows; ++j) {
        y_clean(j) = source(full.mapping.source_rows[lt][j]);
      }
    }

    // Held-out split over joined rows, identical for every algorithm.
    {
      std::vector<Index> order(full.mapping.joined_rows);
      std::iota(order.begin(), order.end(), Index{0});
      Rng rng(cfg.seed, {kTagSplit});
      rng.shuffle(order.begin(), order.end());
      const Index n_test = static_cast<Index>(
          std::floor(cfg.test_fraction * static_cast<double>(order.size())));
      test_ids.assign(order.begin(), order.begin() + n_test);
      train_ids.assign(order.begin() + n_test, order.end());
      std::sort(test_ids.begin(), test_ids.end());
      std::sort(train_ids.begin(), train_ids.end());
    }
    if (train_ids.empty()) throw ConfigError("training split is empty");
    train = subset_mapping(full, train_ids, table_rows);

    batch_size = cfg.batch > 0
                     ? cfg.batch
                     : std::min<Index>(10000, std::max<Index>(1, n_train() / 10));
    if (batch_size > n_train()) {
      throw ConfigError("batch size " + std::to_string(batch_size) +
                        " exceeds training rows " + std::to_string(n_train()));
    }
    dp_ratio = cfg.dp.subsample_r > 0
                   ? cfg.dp.subsample_r
                   : (is_sgd(cfg.algo)
                          ? static_cast<double>(batch_size) / static_cast<double>(n_train())
                          : 1.0);
    ledger.begin_training();
    cur_scatter_rows.assign(m, 0);
  }

  Matrix client_rows(const OrgRt& org, const ClientRt& c) const {
    return org.features.middleRows(c.begin, c.rows);
  }

  std::vector<Matrix> source_predictions() const {
    std::vector<Matrix> preds(m);
    for (int i = 0; i < m; ++i) {
      preds[i].resize(orgs[i].rows(), d_c);
      for (const auto& c : orgs[i].clients) {
        preds[i].middleRows(c.begin, c.rows) = c.model.forward(client_rows(orgs[i], c));
      }
    }
    return preds;
  }

  double reg_term(const std::vector<ConsensusState>* consensus) const {
    if (loss.reg != RegKind::l2 || loss.beta == 0.0) return 0.0;
    double reg = 0.0;
    for (int i = 0; i < m; ++i) {
      if (consensus) {
        reg += (*consensus)[i].w.cwiseProduct(orgs[i].clients[0].model.reg_mask()).squaredNorm();
      } else {
        reg += orgs[i].clients[0].model.reg_value();
      }
    }
    return loss.beta * reg;
  }

  void epoch_done(int epoch, const std::vector<ConsensusState>* consensus = nullptr) {
    auto preds = source_predictions();
    Matrix z = Matrix::Zero(n_train(), d_c);
    for (int i = 0; i < m; ++i) {
      for (Index j = 0; j < n_train(); ++j) {
        z.row(j) += preds[i].row(train.mapping.source_rows[i][j]);
      }
    }
    EpochMetrics row;
    row.epoch = epoch + 1;
    row.train_loss = loss_value(loss, z, y_train()) + reg_term(consensus);
    std::span<const Index> eval_rows = test_ids.empty() ? std::span<const Index>(train_ids)
                                                        : std::span<const Index>(test_ids);
    row.test_metric = evaluate(preds, full.mapping, eval_rows, y_clean, loss.kind);
    row.comm_rounds = ledger.rounds() - ledger.setup().rounds;
    row.comm_bytes = ledger.total_bytes() - ledger.setup().bytes;
    row.sim_time_s = ledger.sim_time_s() - ledger.setup().sim_time_s;
    row.eps_label = eps_label;
    row.eps_feature =
        cfg.dp.feature_dp() ? account(dp_steps, dp_ratio, cfg.dp.sigma, cfg.dp.delta) : 0.0;
    metrics.push_back(row);
    ledger.end_epoch();
    epoch_scatter_rows.push_back(cur_scatter_rows);
    cur_scatter_rows.assign(m, 0);
    if (cfg.trace_params) {
      std::vector<Vector> snap;
      for (const auto& org : orgs) {
        for (const auto& c : org.clients) snap.push_back(c.model.params());
      }
      trace.push_back(std::move(snap));
    }
  }

  Rng client_dp_rng(int node, int epoch) const {
    return Rng(cfg.seed, {kTagFeatureDp, static_cast<std::uint64_t>(node),
                          static_cast<std::uint64_t>(epoch)});
  }

  // ---- algorithms ----

  void run_centralized() {
    std::vector<Matrix> blocks(m), test_blocks(m);
    std::vector<ModelSpec> specs;
    for (int i = 0; i < m; ++i) {
      blocks[i] = gather_features(query.tables[i], train.mapping.source_rows[i]);
      std::vector<Index> test_src(test_ids.size());
      for (std::size_t t = 0; t < test_ids.size(); ++t) {
        test_src[t] = full.mapping.source_rows[i][test_ids[t]];
      }
      test_blocks[i] = gather_features(query.tables[i], test_src);
      specs.push_back(orgs[i].clients[0].model.spec());
    }
    auto hook = [&](int epoch, std::span<const LocalModel> models) {
      current_epoch = epoch;
      for (int i = 0; i < m; ++i) orgs[i].clients[0].model = models[i];
      epoch_done(epoch);
    };
    centralized_train(blocks, y_train(), specs, loss, cfg.epochs, cfg.eta, batch_size,
                      cfg.seed, hook);
  }

  // Per-row DP-SGD gradient matrix: per-sample loss gradients plus each
  // sample's share of the regularizer.
  Matrix dp_per_sample(const LocalModel& model, const Eigen::Ref<const Matrix>& rows,
                       const Eigen::Ref<const Matrix>& upstream,
                       const Eigen::Ref<const Vector>& reg_weight) const {
    Matrix per_sample = model.per_sample_gradients(rows, upstream);
    if (loss.reg == RegKind::l2 && loss.beta != 0.0) {
      per_sample.noalias() += reg_weight * (loss.beta * model.reg_gradient()).transpose();
    }
    return per_sample;
  }

  void run_vfl_sgd() {
    std::vector<Matrix> blocks(m);
    for (int i = 0; i < m; ++i) {
      blocks[i] = gather_features(query.tables[i], train.mapping.source_rows[i]);
    }
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      current_epoch = epoch;
      std::vector<Rng> rngs;
      for (int i = 0; i < m; ++i) rngs.push_back(client_dp_rng(orgs[i].clients[0].node, epoch));
      for (const auto& rows : epoch_batches(n_train(), batch_size, cfg.seed, epoch)) {
        const Index b = static_cast<Index>(rows.size());
        std::vector<Matrix> xb(m);
        Matrix z = Matrix::Zero(b, d_c);
        for (int i = 0; i < m; ++i) {
          xb[i].resize(b, blocks[i].cols());
          for (Index r = 0; r < b; ++r) xb[i].row(r) = blocks[i].row(rows[r]);
          z += orgs[i].clients[0].model.forward(xb[i]);
        }
        Vector yb(b);
        for (Index r = 0; r < b; ++r) yb(r) = y_train()(rows[r]);
        Matrix v = loss_and_grad(loss, z, yb).row_gradients;

        std::vector<Payload> payloads;
        payloads.push_back(Payload{kServerNode, kBroadcastNode, std::uint64_t(b) * 8,
                                   PayloadKind::batch_request});
        for (int i = 0; i < m; ++i) {
          payloads.push_back(Payload{orgs[i].clients[0].node, kServerNode,
                                     std::uint64_t(b * d_c) * 8, PayloadKind::predictions,
                                     cfg.dp.feature_dp()});
        }
        // dl/dz is identical for every organization under the summation
        // aggregator, so the unoptimized scatter is a single broadcast.
        payloads.push_back(Payload{kServerNode, kBroadcastNode, std::uint64_t(b * d_c) * 8,
                                   PayloadKind::loss_derivatives});
        ledger.record_round(payloads, cfg.net);

        for (int i = 0; i < m; ++i) {
          LocalModel& model = orgs[i].clients[0].model;
          Vector g;
          if (cfg.dp.feature_dp()) {
            Matrix per_sample = dp_per_sample(model, xb[i], v, Vector::Ones(b));
            g = clip_and_noise(per_sample, cfg.dp.clip_c, cfg.dp.sigma, rngs[i]);
          } else {
            g = model.backward(xb[i], v) / static_cast<double>(b);
            if (loss.reg == RegKind::l2) g += loss.beta * model.reg_gradient();
          }
          model.params() -= cfg.eta * g;
        }
        if (cfg.dp.feature_dp()) ++dp_steps;
      }
      epoch_done(epoch);
    }
  }

  void run_vfl_admm() {
    std::vector<Matrix> blocks(m);
    for (int i = 0; i < m; ++i) {
      blocks[i] = gather_features(query.tables[i], train.mapping.source_rows[i]);
    }
    AdmmServerState state = AdmmServerState::init(train.mapping, d_c, cfg.rho);
    const IntVector ones = IntVector::Ones(n_train());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      current_epoch = epoch;
      std::vector<Payload> gather;
      for (int i = 0; i < m; ++i) {
        state.cache[i] = orgs[i].clients[0].model.forward(blocks[i]);
        gather.push_back(Payload{orgs[i].clients[0].node, kServerNode,
                                 std::uint64_t(n_train() * d_c) * 8, PayloadKind::predictions,
                                 cfg.dp.feature_dp()});
      }
      ledger.record_round(gather, cfg.net);

      admm_z_update(state, loss, y_train());
      admm_lambda_update(state);
      // The combined per-row vector lambda + rho (sum_k h - z) serves every
      // organization (each subtracts rho times its own cached predictions),
      // so the scatter is one broadcast payload.
      const Matrix combined = state.lambda + cfg.rho * (state.prediction_sum() - state.z);
      ledger.record_round({{Payload{kServerNode, kBroadcastNode,
                                    std::uint64_t(n_train() * d_c) * 8,
                                    PayloadKind::admm_combined}}},
                          cfg.net);

      for (int i = 0; i < m; ++i) {
        LocalModel& model = orgs[i].clients[0].model;
        const Matrix y_i = combined - cfg.rho * state.cache[i];
        AdmmLocalTerm term{blocks[i], y_i, ones, cfg.rho, 1.0 / static_cast<double>(n_train())};
        solve_theta(model, term, epoch, orgs[i].clients[0].node);
        cur_scatter_rows[i] += static_cast<std::uint64_t>(n_train());
      }
      epoch_done(epoch);
    }
  }

  void solve_theta(LocalModel& model, const AdmmLocalTerm& term, int epoch, int node) {
    if (cfg.dp.feature_dp()) {
      Rng rng = client_dp_rng(node, epoch);
      GradientNoise dp{cfg.dp.clip_c, cfg.dp.sigma, [rng]() mutable { return rng.gaussian(); }};
      admm_solve_gradient_steps(model, term, loss.beta, cfg.local_steps, cfg.eta_local, dp);
      dp_steps += cfg.local_steps;
      return;
    }
    if (model.spec().kind == ModelKind::linear) {
      admm_solve_linear(model, term, loss.beta);
    } else {
      admm_solve_gradient_steps(model, term, loss.beta, cfg.local_steps, cfg.eta_local);
    }
  }

  void run_rfl_sgd(bool vertical) {
    SgdServerState state{make_prediction_cache(train.mapping, d_c), {}};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      current_epoch = epoch;
      std::vector<std::vector<Rng>> rngs(m);
      for (int i = 0; i < m; ++i) {
        for (const auto& c : orgs[i].clients) rngs[i].push_back(client_dp_rng(c.node, epoch));
      }
      for (const auto& batch : epoch_batches(n_train(), batch_size, cfg.seed, epoch)) {
        const Index b = static_cast<Index>(batch.size());
        // Outer round: touched-row requests down, predictions up, sparse
        // aggregates down, all in one synchronized exchange.
        std::vector<std::vector<Index>> touched(m);
        std::vector<Payload> payloads;
        for (int i = 0; i < m; ++i) {
          touched[i] = touched_source_rows(train.mapping, i, batch);
          Matrix preds(static_cast<Index>(touched[i].size()), d_c);
          for (std::size_t t = 0; t < touched[i].size(); ++t) {
            const Index row = touched[i][t];
            for (const auto& c : orgs[i].clients) {
              if (row >= c.begin && row < c.begin + c.rows) {
                preds.row(static_cast<Index>(t)) =
                    c.model.forward(orgs[i].features.middleRows(row, 1));
                break;
              }
            }
          }
          gather_predictions_sparse(state.cache, train.mapping, i, touched[i], preds);
          cur_scatter_rows[i] += touched[i].size();
          for (const auto& c : orgs[i].clients) {
            const auto lo = std::lower_bound(touched[i].begin(), touched[i].end(), c.begin);
            const auto hi =
                std::lower_bound(touched[i].begin(), touched[i].end(), c.begin + c.rows);
            const std::uint64_t slice = static_cast<std::uint64_t>(hi - lo);
            if (slice == 0) continue;
            payloads.push_back(
                Payload{kServerNode, c.node, slice * 8, PayloadKind::batch_request});
            payloads.push_back(Payload{c.node, kServerNode, slice * d_c * 8,
                                       PayloadKind::predictions, cfg.dp.feature_dp()});
            payloads.push_back(Payload{kServerNode, c.node, slice * (12 + 8 * d_c),
                                       PayloadKind::sgd_aggregate});
          }
        }
        auto aggregates = sgd_server_step(state, loss, y_train(), batch, train.mapping);
        ledger.record_round(payloads, cfg.net);

        if (vertical) {
          for (int i = 0; i < m; ++i) {
            sgd_client_update(orgs[i].clients[0], orgs[i], aggregates[i], 0,
                              static_cast<Index>(aggregates[i].entries()), b, rngs[i][0]);
          }
        } else {
          sgd_union_step(aggregates, b, rngs);
        }
        if (cfg.dp.feature_dp()) ++dp_steps;
      }
      epoch_done(epoch);
    }
  }

  // Applies theta -= eta * (1/B)(sum VJP + beta sum counts R' ) over the
  // client's slice [lo, hi) of the aggregate (DP: clip+noise first).
  void sgd_client_update(ClientRt& client, const OrgRt& org, const SparseAggregate& agg,
                         Index lo, Index hi, Index b, Rng& rng) {
    Vector g = sgd_client_partial(client, org, agg, lo, hi, rng);
    client.model.params() -= (cfg.eta / static_cast<double>(b)) * g;
  }

  // Eq-form partial: sum over the client's touched rows of the
  // upstream-weighted model gradient plus the count-weighted regularizer
  // share (clipped and noised when feature DP is on).
  Vector sgd_client_partial(ClientRt& client, const OrgRt& org, const SparseAggregate& agg,
                            Index lo, Index hi, Rng& rng) {
    const Index k = hi - lo;
    LocalModel& model = client.model;
    if (k == 0) {
      if (!cfg.dp.feature_dp()) return Vector::Zero(model.param_count());
      return clipped_noisy_sum(Matrix::Zero(0, model.param_count()), cfg.dp.clip_c,
                               cfg.dp.sigma, [&] { return rng.gaussian(); });
    }
    Matrix rows(k, org.features.cols());
    for (Index t = 0; t < k; ++t) rows.row(t) = org.features.row(agg.rows[lo + t]);
    const auto upstream = agg.values.middleRows(lo, k);
    const auto counts = agg.counts.segment(lo, k);
    if (cfg.dp.feature_dp()) {
      Matrix per_sample = dp_per_sample(model, rows, upstream, counts.cast<double>());
      return clipped_noisy_sum(per_sample, cfg.dp.clip_c, cfg.dp.sigma,
                               [&] { return rng.gaussian(); });
    }
    Vector g = model.backward(rows, upstream);
    if (loss.reg == RegKind::l2) {
      g += loss.beta * static_cast<double>(counts.sum()) * model.reg_gradient();
    }
    return g;
  }

  // One gather round and one scatter round per batch cover every
  // organization's inner exchange: the per-organization aggregations are
  // independent and proceed in parallel.
  void sgd_union_step(const std::vector<SparseAggregate>& aggregates, Index b,
                      std::vector<std::vector<Rng>>& rngs) {
    std::vector<std::vector<Vector>> partials(m);
    std::vector<Payload> up, down;
    for (int i = 0; i < m; ++i) {
      OrgRt& org = orgs[i];
      const SparseAggregate& agg = aggregates[i];
      for (std::size_t q = 0; q < org.clients.size(); ++q) {
        ClientRt& c = org.clients[q];
        const auto lo =
            std::lower_bound(agg.rows.begin(), agg.rows.end(), c.begin) - agg.rows.begin();
        const auto hi = std::lower_bound(agg.rows.begin(), agg.rows.end(), c.begin + c.rows) -
                        agg.rows.begin();
        partials[i].push_back(sgd_client_partial(c, org, agg, lo, hi, rngs[i][q]));
        const std::uint64_t pbytes = static_cast<std::uint64_t>(c.model.param_count()) * 8;
        up.push_back(Payload{c.node, org.coord, pbytes, PayloadKind::partial_gradient,
                             cfg.dp.feature_dp()});
        down.push_back(Payload{org.coord, c.node, pbytes, PayloadKind::aggregated_gradient});
      }
    }
    ledger.record_round(up, cfg.net);
    ledger.record_round(down, cfg.net);
    for (int i = 0; i < m; ++i) {
      Vector aggregate = sgd_aggregate(partials[i], 1.0 / static_cast<double>(b));
      for (auto& c : orgs[i].clients) c.model.params() -= cfg.eta * aggregate;
    }
  }

  void run_rfl_admm(bool vertical) {
    AdmmServerState state = AdmmServerState::init(train.mapping, d_c, cfg.rho);
    const double rho_h = cfg.rho_h > 0 ? cfg.rho_h : cfg.rho;
    std::vector<ConsensusState> consensus;
    if (!vertical) {
      for (int i = 0; i < m; ++i) {
        ConsensusState cs = ConsensusState::init(orgs[i].clients[0].model.param_count(),
                                                 static_cast<int>(orgs[i].clients.size()),
                                                 rho_h, cfg.inner_rounds, cfg.local_steps);
        cs.w = orgs[i].clients[0].model.params();
        consensus.push_back(std::move(cs));
      }
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      current_epoch = epoch;
      // Outer gather: per-source-row predictions, assembled in offset order.
      std::vector<Payload> gather;
      for (int i = 0; i < m; ++i) {
        Matrix preds(orgs[i].rows(), d_c);
        for (const auto& c : orgs[i].clients) {
          preds.middleRows(c.begin, c.rows) = c.model.forward(client_rows(orgs[i], c));
          gather.push_back(Payload{c.node, kServerNode, std::uint64_t(c.rows * d_c) * 8,
                                   PayloadKind::predictions, cfg.dp.feature_dp()});
        }
        gather_predictions(state.cache, train.mapping, i, preds, orgs[i].rows());
      }
      ledger.record_round(gather, cfg.net);

      admm_z_update(state, loss, y_train());
      admm_lambda_update(state);

      // Outer scatter: duplicate-aggregated Y (and counts, first epoch only;
      // G never changes so clients cache it).
      std::vector<AggregatedVars> aggs(m);
      std::vector<Payload> scatter;
      const std::uint64_t per_row = epoch == 0 ? (d_c + 1) * 8 : d_c * 8;
      for (int i = 0; i < m; ++i) {
        aggs[i] = admm_aggregate(state, train.reverse, i);
        cur_scatter_rows[i] += static_cast<std::uint64_t>(orgs[i].rows());
        for (const auto& c : orgs[i].clients) {
          scatter.push_back(Payload{kServerNode, c.node,
                                    static_cast<std::uint64_t>(c.rows) * per_row,
                                    PayloadKind::admm_aggregate});
        }
      }
      ledger.record_round(scatter, cfg.net);

      const double inv_n = 1.0 / static_cast<double>(n_train());
      if (vertical) {
        for (int i = 0; i < m; ++i) {
          AdmmLocalTerm term{orgs[i].features, aggs[i].Y, aggs[i].counts, cfg.rho, inv_n};
          solve_theta(orgs[i].clients[0].model, term, epoch, orgs[i].clients[0].node);
        }
        epoch_done(epoch);
        continue;
      }

      // Inner consensus rounds: gather thetas, update (w, u), scatter, then
      // every client refreshes its theta against the new (w, u). The
      // organizations' exchanges are independent and share each round, so an
      // epoch costs exactly 2 + 2 T' rounds.
      for (int round = 0; round < cfg.inner_rounds; ++round) {
        std::vector<Payload> up, down;
        for (int i = 0; i < m; ++i) {
          OrgRt& org = orgs[i];
          ConsensusState& cs = consensus[i];
          const int q_count = static_cast<int>(org.clients.size());
          const int m_for_w = cfg.w_update_partition_count ? q_count : m;
          Vector theta_bar = Vector::Zero(cs.w.size());
          Vector u_bar = Vector::Zero(cs.w.size());
          for (int q = 0; q < q_count; ++q) {
            theta_bar += org.clients[q].model.params();
            u_bar += cs.u[q];
            const std::uint64_t pbytes =
                static_cast<std::uint64_t>(org.clients[q].model.param_count()) * 8;
            up.push_back(Payload{org.clients[q].node, org.coord, pbytes,
                                 PayloadKind::model_params, cfg.dp.feature_dp()});
            down.push_back(
                Payload{org.coord, org.clients[q].node, 2 * pbytes, PayloadKind::consensus_vars});
          }
          theta_bar /= static_cast<double>(q_count);
          u_bar /= static_cast<double>(q_count);
          cs.w = consensus_w_update(theta_bar, u_bar, loss.reg, loss.beta, m_for_w, rho_h,
                                    org.clients[0].model.reg_mask());
          for (int q = 0; q < q_count; ++q) {
            consensus_u_update(cs.u[q], org.clients[q].model.params(), cs.w);
          }
        }
        ledger.record_round(up, cfg.net);
        ledger.record_round(down, cfg.net);

        for (int i = 0; i < m; ++i) {
          OrgRt& org = orgs[i];
          ConsensusState& cs = consensus[i];
          for (std::size_t q = 0; q < org.clients.size(); ++q) {
            ClientRt& c = org.clients[q];
            AdmmLocalTerm term{org.features.middleRows(c.begin, c.rows),
                               aggs[i].Y.middleRows(c.begin, c.rows),
                               aggs[i].counts.segment(c.begin, c.rows), cfg.rho, inv_n};
            ThetaUpdateOptions opts;
            opts.rho_h = rho_h;
            opts.steps = cfg.local_steps;
            opts.eta = cfg.eta_local;
            if (cfg.dp.feature_dp()) {
              Rng rng = client_dp_rng(c.node, epoch * cfg.inner_rounds + round);
              opts.dp = DpStep{cfg.dp.clip_c, cfg.dp.sigma,
                               [rng]() mutable { return rng.gaussian(); }};
            }
            consensus_theta_update(c.model, term, cs.w, cs.u[q], opts);
          }
        }
      }
      if (cfg.dp.feature_dp()) dp_steps += cfg.inner_rounds * cfg.local_steps;
      epoch_done(epoch, &consensus);
    }
  }

  RunResult finish() {
    nlohmann::json scatter = nlohmann::json::array();
    for (const auto& per_org : epoch_scatter_rows) scatter.push_back(per_org);
    std::uint64_t sum_rows = 0;
    for (Index n : table_rows) sum_rows += static_cast<std::uint64_t>(n);
    ledger.metadata = {
        {"algo", algo_name(cfg.algo)},
        {"joined_rows", static_cast<std::uint64_t>(n_train())},
        {"full_joined_rows", static_cast<std::uint64_t>(full.mapping.joined_rows)},
        {"sum_table_rows", sum_rows},
        {"batch", static_cast<std::uint64_t>(batch_size)},
        {"inner_rounds", cfg.inner_rounds},
        {"organizations", m},
        {"net", cfg.net_preset},
        {"seed", cfg.seed},
        {"epoch_scatter_rows", scatter},
    };
    RunResult res;
    res.metrics = metrics;
    res.ledger = std::move(ledger);
    res.joined_rows = full.mapping.joined_rows;
    res.train_rows = n_train();
    res.table_rows = table_rows;
    res.param_trace = std::move(trace);
    for (auto& org : orgs) {
      std::vector<LocalModel> models;
      for (auto& c : org.clients) models.push_back(std::move(c.model));
      res.models.push_back(std::move(models));
    }
    if (!cfg.out_metrics.empty()) write_metrics_csv(cfg.out_metrics, res.metrics);
    if (!cfg.out_ledger.empty()) {
      std::ofstream out(cfg.out_ledger);
      if (!out) throw ConfigError("cannot write ledger '" + cfg.out_ledger + "'");
      out << res.ledger.to_json().dump(2) << "\n";
    }
    if (!cfg.out_checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.out_checkpoint_dir);
      for (std::size_t i = 0; i < res.models.size(); ++i) {
        for (std::size_t q = 0; q < res.models[i].size(); ++q) {
          res.models[i][q].save(cfg.out_checkpoint_dir + "/model_o" + std::to_string(i) +
                                "_c" + std::to_string(q) + ".bin");
        }
      }
    }
    return res;
  }
};

}  // namespace

RunResult run(const RunConfig& cfg, const Query& query) {
  Driver driver(cfg, query);
  driver.setup();
  try {
    switch (cfg.algo) {
      case Algo::centralized: driver.run_centralized(); break;
      case Algo::vfl_sgd: driver.run_vfl_sgd(); break;
      case Algo::vfl_admm: driver.run_vfl_admm(); break;
      case Algo::rfl_sgd_v: driver.run_rfl_sgd(true); break;
      case Algo::rfl_sgd: driver.run_rfl_sgd(false); break;
      case Algo::rfl_admm_v: driver.run_rfl_admm(true); break;
      case Algo::rfl_admm: driver.run_rfl_admm(false); break;
    }
  } catch (const Error& e) {
    if (driver.current_epoch < 0) throw;
    throw Error("epoch " + std::to_string(driver.current_epoch + 1) + ": " + e.what());
  }
  return driver.finish();
}

Query load_query(const RunConfig& cfg) {
  if (cfg.tables.empty()) throw ConfigError("config lists no tables");
  Query query;
  for (int i = 0; i < static_cast<int>(cfg.tables.size()); ++i) {
    const TableConfig& tc = cfg.tables[i];
    if (tc.partition_csvs.empty()) {
      throw ConfigError("table '" + tc.schema.table_name + "' lists no CSV files");
    }
    std::vector<HorizontalPartition> parts;
    for (int q = 0; q < static_cast<int>(tc.partition_csvs.size()); ++q) {
      parts.push_back(load_csv(tc.partition_csvs[q], tc.schema, ClientId{i, q}));
    }
    query.tables.push_back(VerticalTable::from_partitions(std::move(parts)));
  }
  query.predicates = cfg.predicates;
  return query;
}

RunResult run(const RunConfig& cfg) {
  const Query query = load_query(cfg);
  return run(cfg, query);
}

}  // namespace rfl
