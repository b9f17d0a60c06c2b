// Acceptance suite: one pass/fail line per criterion, exit nonzero on any
// failure. Tolerances are pinned in code next to each check.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rfl/consensus.hpp"
#include "rfl/driver.hpp"
#include "rfl/join_server.hpp"
#include "rfl/privacy.hpp"

#include "oracles.hpp"
#include "toy.hpp"

using namespace rfl;

namespace {

int failures = 0;

struct Check {
  bool ok = false;
  std::string detail;
};

void criterion(int id, const std::string& name, const std::function<Check()>& fn) {
  const auto start = std::chrono::steady_clock::now();
  Check c;
  try {
    c = fn();
  } catch (const std::exception& e) {
    c = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%d] %-44s %s  (%.1fs)%s%s\n", id, name.c_str(), c.ok ? "PASS" : "FAIL", secs,
              c.detail.empty() ? "" : "  ", c.detail.c_str());
  std::fflush(stdout);
  if (!c.ok) ++failures;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Randomized star-schema instances for the exactness criteria: M in [2,4],
// fact rows <= 200, per-fact-row duplication in [1,8].
SynthSpec random_instance(Rng& rng, int trial) {
  SynthSpec spec;
  spec.orgs = 2 + static_cast<int>(rng.below(3));
  spec.duplication = 1 + static_cast<int>(rng.below(8));
  spec.rows.push_back(20 + static_cast<Index>(rng.below(181)));  // fact <= 200
  const Index keys = 5 + static_cast<Index>(rng.below(20));
  spec.rows.push_back(keys * spec.duplication);  // first dimension carries it
  for (int t = 2; t < spec.orgs; ++t) spec.rows.push_back(5 + static_cast<Index>(rng.below(40)));
  for (int t = 0; t < spec.orgs; ++t) spec.features.push_back(1 + static_cast<Index>(rng.below(4)));
  spec.class_count = trial % 3 == 1 ? 3 : 1;
  spec.noise = 0.2;
  spec.seed = 1000 + static_cast<std::uint64_t>(trial);
  return spec;
}

RunConfig instance_cfg(const SynthSpec& spec, int trial) {
  RunConfig cfg;
  cfg.algo = Algo::rfl_sgd_v;
  cfg.model_kind = trial % 5 == 4 ? ModelKind::mlp : ModelKind::linear;
  cfg.hidden = 4;
  cfg.bias = trial % 2 == 0 ? BiasMode::first : BiasMode::none;
  cfg.loss = LossSpec{spec.class_count > 1 ? LossKind::softmax_cross_entropy
                                           : LossKind::squared,
                      RegKind::l2, 0.01};
  cfg.epochs = 20;
  cfg.eta = 0.05;
  cfg.seed = 500 + static_cast<std::uint64_t>(trial);
  cfg.test_fraction = 0.0;
  cfg.trace_params = true;
  return cfg;
}

std::vector<Vector> org_params(const RunResult& res, std::size_t epoch) {
  std::vector<Vector> out;
  std::size_t at = 0;
  for (const auto& org_models : res.models) {
    out.push_back(res.param_trace.at(epoch).at(at));
    at += org_models.size();
  }
  return out;
}

double trace_gap(const RunResult& a, const RunResult& b) {
  double gap = 0.0;
  for (std::size_t e = 0; e < a.param_trace.size(); ++e) {
    auto pa = org_params(a, e);
    auto pb = org_params(b, e);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      gap = std::max(gap, (pa[i] - pb[i]).lpNorm<Eigen::Infinity>());
    }
  }
  return gap;
}

// The ridge star schema of the convergence criteria: N = 2000 joined rows,
// sum n_i = 700, d = 30.
SynthSpec ridge_spec() {
  SynthSpec spec;
  spec.orgs = 3;
  spec.rows = {500, 100, 100};
  spec.features = {10, 10, 10};
  spec.duplication = 4;
  spec.noise = 0.2;
  spec.seed = 4242;
  return spec;
}

RunConfig ridge_cfg(Algo algo) {
  RunConfig cfg;
  cfg.algo = algo;
  cfg.model_kind = ModelKind::linear;
  cfg.bias = BiasMode::none;
  cfg.loss = LossSpec{LossKind::squared, RegKind::l2, 0.01};
  cfg.epochs = 200;
  cfg.eta = 0.1;
  cfg.rho = 1.0;
  cfg.seed = 77;
  cfg.test_fraction = 0.15;
  return cfg;
}

// Closed-form ridge optimum over the same training rows the runs use.
Vector ridge_optimum(const Query& query, const RunConfig& cfg, Index* train_rows_out) {
  auto mapped = build_mapping(query, toy::messages_of(query));
  std::vector<Index> order(mapped.mapping.joined_rows);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(cfg.seed, {0x73706c74});  // split stream, same as the driver
  rng.shuffle(order.begin(), order.end());
  const Index n_test = static_cast<Index>(
      std::floor(cfg.test_fraction * static_cast<double>(order.size())));
  std::vector<Index> train(order.begin() + n_test, order.end());
  std::sort(train.begin(), train.end());
  if (train_rows_out) *train_rows_out = static_cast<Index>(train.size());

  Index d = 0;
  for (const auto& t : query.tables) d += t.schema().feature_count();
  Matrix x(train.size(), d);
  Index col = 0;
  for (int i = 0; i < query.table_count(); ++i) {
    Matrix all = query.tables[i].all_features();
    for (std::size_t j = 0; j < train.size(); ++j) {
      x.block(j, col, 1, all.cols()) = all.row(mapped.mapping.source_rows[i][train[j]]);
    }
    col += all.cols();
  }
  Vector y(train.size());
  for (std::size_t j = 0; j < train.size(); ++j) y(j) = (*mapped.mapping.labels)(train[j]);
  return oracle::ridge_solution(x, y, cfg.loss.beta);
}

Vector concat_org_params(const RunResult& res) {
  Index total = 0;
  for (const auto& org : res.models) total += org[0].param_count();
  Vector out(total);
  Index at = 0;
  for (const auto& org : res.models) {
    out.segment(at, org[0].param_count()) = org[0].params();
    at += org[0].param_count();
  }
  return out;
}

std::uint64_t scatter_bytes(const RunResult& res, std::size_t epoch) {
  std::uint64_t bytes = 0;
  for (const auto& [link, b] : res.ledger.epoch_delta(epoch).bytes_by_link) {
    if (link.first == kServerNode) bytes += b;
  }
  return bytes;
}

// ---------------------------------------------------------------------------

Check exact_decomposition_and_aggregation(bool aggregation_side) {
  Rng rng(31337);
  double worst_trajectory = 0.0;
  double worst_sums = 0.0;
  double worst_gradient = 0.0;
  const int instances = 50;
  for (int trial = 0; trial < instances; ++trial) {
    SynthSpec spec = random_instance(rng, trial);
    auto sr = synth(spec);

    if (!aggregation_side) {
      // Criterion 1: full-batch decomposed SGD vs centralized SGD on the
      // materialized join, 20 steps.
      auto mapped = build_mapping(sr.query, toy::messages_of(sr.query));
      RunConfig cfg = instance_cfg(spec, trial);
      cfg.batch = mapped.mapping.joined_rows;  // full batch; no test split
      auto decomposed = run(cfg, sr.query);
      cfg.algo = Algo::centralized;
      auto central = run(cfg, sr.query);
      worst_trajectory = std::max(worst_trajectory, trace_gap(decomposed, central));
      continue;
    }

    // Criterion 2 on the same instances: optimized aggregates vs naive O(N)
    // sums, and the reduced theta-gradient vs the per-joined-row gradient.
    auto mapped = build_mapping(sr.query, toy::messages_of(sr.query));
    const Index n = mapped.mapping.joined_rows;
    const int m = sr.query.table_count();
    Rng noise(rng.next_u64());
    const double rho = 0.5 + noise.uniform();
    AdmmServerState state = AdmmServerState::init(mapped.mapping, 1, rho);
    for (auto& h : state.cache) {
      for (Index j = 0; j < n; ++j) h(j, 0) = noise.gaussian();
    }
    for (Index j = 0; j < n; ++j) {
      state.z(j, 0) = noise.gaussian();
      state.lambda(j, 0) = noise.gaussian();
    }
    const Matrix pred_sum = state.prediction_sum();

    // SGD-side aggregates (full batch) against naive per-row sums.
    SgdServerState sgd{state.cache, {}};
    std::vector<Index> batch(n);
    std::iota(batch.begin(), batch.end(), Index{0});
    LossSpec sq{LossKind::squared, RegKind::none, 0};
    Vector y = *mapped.mapping.labels;
    auto aggs = sgd_server_step(sgd, sq, y, batch, mapped.mapping);

    for (int i = 0; i < m; ++i) {
      const auto& rev = mapped.reverse.tables[i];
      auto admm = admm_aggregate(state, mapped.reverse, i);
      for (Index src = 0; src < rev.counts.size(); ++src) {
        double y_sum = 0.0, v_sum = 0.0;
        int count = 0;
        for (Index j = 0; j < n; ++j) {
          if (mapped.mapping.source_rows[i][j] != src) continue;
          ++count;
          const double s = pred_sum(j, 0) - state.cache[i](j, 0) - state.z(j, 0);
          y_sum += state.lambda(j, 0) + rho * s;
          v_sum += pred_sum(j, 0) - y(j);
        }
        worst_sums = std::max(worst_sums, std::abs(admm.Y(src, 0) - y_sum));
        if (admm.counts(src) != count) return {false, "duplicate count mismatch"};
        auto it = std::lower_bound(aggs[i].rows.begin(), aggs[i].rows.end(), src);
        const double got_v = (it != aggs[i].rows.end() && *it == src)
                                 ? aggs[i].values(it - aggs[i].rows.begin(), 0)
                                 : 0.0;
        worst_sums = std::max(worst_sums, std::abs(got_v - v_sum));
      }

      // Reduced vs unoptimized theta-gradient at random parameters.
      auto admm_vars = admm_aggregate(state, mapped.reverse, i);
      Matrix src_feats = sr.query.tables[i].all_features();
      Matrix joined = gather_features(sr.query.tables[i], mapped.mapping.source_rows[i]);
      AdmmLocalTerm term{src_feats, admm_vars.Y, admm_vars.counts, rho,
                         1.0 / static_cast<double>(n)};
      LocalModel model = LocalModel::init(
          ModelSpec{ModelKind::linear, src_feats.cols(), 1, 16, false, 0});
      for (Index k = 0; k < model.param_count(); ++k) model.params()(k) = noise.gaussian();
      const double beta = 0.1;
      Vector g_opt = term.gradient(model) + beta * model.reg_gradient();
      Matrix f = model.forward(joined);
      Matrix s_col(n, 1);
      for (Index j = 0; j < n; ++j) {
        s_col(j, 0) = pred_sum(j, 0) - state.cache[i](j, 0) - state.z(j, 0);
      }
      Vector g_naive =
          model.backward(joined, state.lambda + rho * (s_col + f)) / static_cast<double>(n) +
          beta * model.reg_gradient();
      worst_gradient = std::max(worst_gradient, (g_opt - g_naive).lpNorm<Eigen::Infinity>());
    }
  }
  if (!aggregation_side) {
    return {worst_trajectory <= 1e-9,
            fmt("max trajectory deviation %.2e over 50 joins (tol 1e-9)", worst_trajectory)};
  }
  const bool ok = worst_sums <= 1e-12 && worst_gradient <= 1e-10;
  return {ok, fmt("max aggregate deviation %.2e (tol 1e-12), ", worst_sums) +
                  fmt("max gradient deviation %.2e (tol 1e-10)", worst_gradient)};
}

Check union_exactness() {
  Rng rng(909);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    SynthSpec spec = random_instance(rng, trial * 3);
    spec.clients.clear();
    for (int i = 0; i < spec.orgs; ++i) {
      spec.clients.push_back(2 + static_cast<int>(rng.below(3)));  // 2-4 partitions
    }
    auto sr = synth(spec);
    RunConfig cfg = instance_cfg(spec, trial * 3);
    cfg.algo = Algo::rfl_sgd;
    cfg.epochs = 5;
    cfg.batch = std::max<Index>(8, spec.rows[0] / 4);
    auto partitioned = run(cfg, sr.query);
    cfg.algo = Algo::rfl_sgd_v;
    auto merged = run(cfg, sr.query);
    worst = std::max(worst, trace_gap(partitioned, merged));
  }
  return {worst <= 1e-12, fmt("max step deviation %.2e (tol 1e-12)", worst)};
}

Check admm_convergence() {
  auto sr = synth(ridge_spec());
  RunConfig cfg = ridge_cfg(Algo::rfl_admm_v);
  Index n_train = 0;
  Vector target = ridge_optimum(sr.query, cfg, &n_train);

  auto vertical = run(cfg, sr.query);
  const double dist_v = (concat_org_params(vertical) - target).lpNorm<Eigen::Infinity>();

  RunConfig hcfg = ridge_cfg(Algo::rfl_admm);
  hcfg.inner_rounds = 10;
  hcfg.local_steps = 60;
  hcfg.eta_local = 0.5;
  // The consensus w-update must weight the proximal term by the partition
  // count for its fixed point to solve the organization's subproblem with
  // the configured beta; the organization count (the default) rescales the
  // effective regularizer by Q_i/M.
  hcfg.w_update_partition_count = true;
  SynthSpec split = ridge_spec();
  split.clients = {2, 2, 2};
  auto sr2 = synth(split);
  auto horizontal = run(hcfg, sr2.query);
  const double dist_h = (concat_org_params(horizontal) - target).lpNorm<Eigen::Infinity>();

  const bool ok = dist_v <= 1e-3 && dist_h <= 5e-3;
  return {ok, fmt("rfl-admm-v distance %.2e (tol 1e-3), ", dist_v) +
                  fmt("rfl-admm distance %.2e (tol 5e-3)", dist_h)};
}

Check communication_claims() {
  auto sr = synth(ridge_spec());
  SynthSpec split = ridge_spec();
  split.clients = {2, 2, 2};
  auto sr2 = synth(split);

  auto run_short = [&](Algo algo, const Query& query, int inner) {
    RunConfig cfg = ridge_cfg(algo);
    cfg.epochs = 3;
    cfg.inner_rounds = inner;
    cfg.local_steps = 5;
    return run(cfg, query);
  };

  auto vfl_sgd = run_short(Algo::vfl_sgd, sr.query, 10);
  auto rfl_sgd_v = run_short(Algo::rfl_sgd_v, sr.query, 10);
  auto vfl_admm = run_short(Algo::vfl_admm, sr.query, 10);
  auto rfl_admm_v = run_short(Algo::rfl_admm_v, sr.query, 10);
  auto rfl_admm = run_short(Algo::rfl_admm, sr2.query, 10);
  auto rfl_sgd = run_short(Algo::rfl_sgd, sr2.query, 10);

  const Index n_train = vfl_sgd.train_rows;
  const Index batch = std::min<Index>(10000, std::max<Index>(1, n_train / 10));
  const std::uint64_t expect_sgd = (n_train + batch - 1) / batch;

  for (std::size_t e = 0; e < 3; ++e) {
    if (vfl_sgd.ledger.epoch_delta(e).rounds != expect_sgd) return {false, "vfl-sgd rounds"};
    if (rfl_sgd_v.ledger.epoch_delta(e).rounds != expect_sgd) return {false, "rfl-sgd-v rounds"};
    if (vfl_admm.ledger.epoch_delta(e).rounds != 2) return {false, "vfl-admm rounds"};
    if (rfl_admm_v.ledger.epoch_delta(e).rounds != 2) return {false, "rfl-admm-v rounds"};
    if (rfl_admm.ledger.epoch_delta(e).rounds != 2 + 2 * 10) return {false, "rfl-admm rounds"};
    if (rfl_sgd.ledger.epoch_delta(e).rounds != 3 * expect_sgd) return {false, "rfl-sgd rounds"};
  }

  // Scatter-byte ratio on a steady epoch (after the one-time counts): the
  // unoptimized broadcast moves N d_c reals per epoch, the reduced path
  // sum n_i.
  const std::uint64_t vfl_scatter = scatter_bytes(vfl_admm, 2);
  const std::uint64_t rfl_scatter = scatter_bytes(rfl_admm_v, 2);
  std::uint64_t sum_rows = 0;
  for (Index n_i : rfl_admm_v.table_rows) sum_rows += static_cast<std::uint64_t>(n_i);
  const std::uint64_t n_joined = static_cast<std::uint64_t>(n_train);
  const bool ratio_exact = vfl_scatter * sum_rows == rfl_scatter * n_joined;

  // Simulated per-epoch time ordering on us-uk.
  const double t_rfl_admm_v = rfl_admm_v.ledger.epoch_delta(2).sim_time_s;
  const double t_vfl_admm = vfl_admm.ledger.epoch_delta(2).sim_time_s;
  const double t_vfl_sgd = vfl_sgd.ledger.epoch_delta(2).sim_time_s;
  const bool ordered = t_rfl_admm_v < t_vfl_admm && t_vfl_admm < t_vfl_sgd;

  const bool ok = ratio_exact && ordered;
  std::string detail =
      "rounds exact; scatter ratio " + std::to_string(vfl_scatter) + ":" +
      std::to_string(rfl_scatter) + (ratio_exact ? " == " : " != ") + "N:sum(n_i) " +
      std::to_string(n_joined) + ":" + std::to_string(sum_rows) + "; " +
      fmt("epoch times %.4fs < ", t_rfl_admm_v) + fmt("%.4fs < ", t_vfl_admm) +
      fmt("%.4fs", t_vfl_sgd);
  return {ok, detail};
}

Check dp_mechanics() {
  Rng rng(606);
  // Clipping exactness.
  Matrix grads(200, 6);
  for (Index r = 0; r < grads.rows(); ++r) {
    for (Index c = 0; c < grads.cols(); ++c) grads(r, c) = 4.0 * rng.gaussian();
  }
  const double cap = 1.0;
  Matrix clipped = grads;
  clip_rows(clipped, cap);
  for (Index r = 0; r < clipped.rows(); ++r) {
    if (clipped.row(r).norm() > cap + 1e-12) return {false, "post-clip norm exceeds C"};
  }

  // Noise variance at sigma = C = 1, B = 1 over 1e6 coordinates.
  {
    Rng noise(607);
    const int trials = 250'000;
    const Index d = 4;
    Matrix zeros = Matrix::Zero(1, d);
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
      Vector got = clip_and_noise(zeros, 1.0, 1.0, noise);
      for (Index c = 0; c < d; ++c) {
        sum += got(c);
        sum_sq += got(c) * got(c);
      }
    }
    const double n = static_cast<double>(trials) * d;
    const double var = sum_sq / n - (sum / n) * (sum / n);
    if (std::abs(var - 1.0) > 0.01) {
      return {false, fmt("noise variance %.4f not in 1 +- 1%%", var)};
    }
  }

  // Label-flip rate at lambda = 0.5 vs the Monte-Carlo prediction.
  const double lambda = 0.5;
  double mc_rate = 0.0;
  {
    Rng mc(424242);
    const double b = lambda / std::numbers::sqrt2;
    const int draws = 10'000'000;
    int flips = 0;
    for (int t = 0; t < draws; ++t) {
      if (mc.laplace(b) - mc.laplace(b) > 1.0) ++flips;
    }
    mc_rate = static_cast<double>(flips) / draws;
  }
  double flip_rate = 0.0;
  {
    Rng lr(608);
    Vector y = Vector::Zero(1'000'000);
    auto got = perturb_labels(y, 2, lambda, lr);
    flip_rate = got.labels.sum() / 1e6;
  }
  if (std::abs(flip_rate - mc_rate) > 0.01 * mc_rate) {
    return {false, fmt("flip rate %.5f vs ", flip_rate) + fmt("MC %.5f beyond 1%%", mc_rate)};
  }

  // Label budget: 2 sqrt(2) / 0.5 = 4 sqrt(2) = 5.66.
  const double eps_label = label_epsilon(lambda);
  if (std::abs(eps_label - 4.0 * std::numbers::sqrt2) > 1e-12) {
    return {false, "eps_label formula deviates from 4 sqrt(2)"};
  }
  if (std::abs(eps_label - 5.6) > 0.06) return {false, "eps_label not 5.66 within rounding"};

  // Accountant: monotone in steps, and within 5% of the closed-form
  // binomial reference at the pinned point.
  double prev = 0.0;
  for (long steps : {1L, 10L, 50L, 250L, 1000L, 2000L}) {
    const double eps = account(steps, 0.01, 1.0, 1e-5);
    if (eps < prev) return {false, "accountant not monotone in steps"};
    prev = eps;
  }
  const double ours = account(1000, 0.01, 1.0, 1e-5);
  const double reference = oracle::accountant_reference(1000, 0.01, 1.0, 1e-5);
  if (std::abs(ours - reference) > 0.05 * reference) {
    return {false,
            fmt("accountant %.4f vs ", ours) + fmt("reference %.4f beyond 5%%", reference)};
  }
  return {true, fmt("flip rate %.5f, ", flip_rate) + fmt("eps_label %.3f, ", eps_label) +
                    fmt("eps(1000 steps) %.3f", ours)};
}

RunConfig trend_cfg(bool dp) {
  RunConfig cfg;
  cfg.algo = Algo::rfl_sgd_v;
  cfg.model_kind = ModelKind::linear;
  cfg.bias = BiasMode::none;
  cfg.loss = LossSpec{LossKind::softmax_cross_entropy, RegKind::none, 0.0};
  cfg.epochs = 10;
  cfg.eta = 0.3;
  cfg.seed = 99;
  cfg.test_fraction = 0.15;
  if (dp) {
    cfg.dp.label_lambda = 0.5;
    cfg.dp.clip_c = 1.0;
    cfg.dp.sigma = 1.0;
    cfg.dp.delta = 1e-5;
  }
  return cfg;
}

SynthSpec trend_spec() {
  SynthSpec spec;
  spec.orgs = 2;
  spec.rows = {4000, 50};
  spec.features = {6, 4};
  spec.duplication = 1;
  spec.class_count = 3;
  spec.noise = 0.2;
  spec.seed = 313;
  return spec;
}

Check dp_trend() {
  auto sr = synth(trend_spec());
  auto clean = run(trend_cfg(false), sr.query);
  auto noised = run(trend_cfg(true), sr.query);
  const double acc_clean = clean.metrics.back().test_metric;
  const double acc_dp = noised.metrics.back().test_metric;
  const double drop_points = 100.0 * (acc_clean - acc_dp);
  const bool ok = drop_points <= 10.0;
  return {ok, fmt("accuracy %.3f clean vs ", acc_clean) + fmt("%.3f with DP ", acc_dp) +
                  fmt("(drop %.1f points, tol 10)", drop_points)};
}

Check determinism() {
  auto sr = synth(ridge_spec());
  RunConfig cfg = ridge_cfg(Algo::rfl_admm_v);
  cfg.epochs = 12;
  auto a = run(cfg, sr.query);
  auto b = run(cfg, sr.query);
  if (metrics_to_csv(a.metrics) != metrics_to_csv(b.metrics)) {
    return {false, "rfl-admm-v metrics differ across reruns"};
  }
  if (concat_org_params(a) != concat_org_params(b)) {
    return {false, "rfl-admm-v parameters differ across reruns"};
  }

  auto tr = synth(trend_spec());
  auto c = run(trend_cfg(true), tr.query);
  auto d = run(trend_cfg(true), tr.query);
  if (metrics_to_csv(c.metrics) != metrics_to_csv(d.metrics)) {
    return {false, "DP run metrics differ across reruns"};
  }
  if (concat_org_params(c) != concat_org_params(d)) {
    return {false, "DP run parameters differ across reruns"};
  }
  return {true, "bit-identical metrics and parameters across reruns"};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion(1, "exact SGD decomposition (50 random joins)",
            [] { return exact_decomposition_and_aggregation(false); });
  criterion(2, "duplicate-aggregation exactness",
            [] { return exact_decomposition_and_aggregation(true); });
  criterion(3, "union exactness (2-4 way partitions)", union_exactness);
  criterion(4, "ADMM convergence to the ridge optimum", admm_convergence);
  criterion(5, "communication rounds, bytes and times", communication_claims);
  criterion(6, "DP mechanics and accountant", dp_mechanics);
  criterion(7, "DP accuracy trend", dp_trend);
  criterion(8, "bit-reproducibility under fixed seeds", determinism);
  if (failures) {
    std::printf("%d criterion(s) FAILED\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
