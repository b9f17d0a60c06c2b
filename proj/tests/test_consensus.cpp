#include "doctest.h"

#include <numeric>

#include "rfl/consensus.hpp"
#include "rfl/rng.hpp"

#include "oracles.hpp"
#include "toy.hpp"

using namespace rfl;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = rng.gaussian();
  }
  return m;
}

}  // namespace

TEST_SUITE("consensus") {

TEST_CASE("sgd_aggregate scales the sum of partials") {
  Vector a(2), b(2);
  a << 1, 2;
  b << 3, 4;

  SUBCASE("single client") {
    std::vector<Vector> parts = {a};
    Vector got = sgd_aggregate(parts, 0.1);
    CHECK(got(0) == doctest::Approx(0.1));
    CHECK(got(1) == doctest::Approx(0.2));
  }
  SUBCASE("opposite partials cancel") {
    std::vector<Vector> parts = {a, Vector(-a)};
    CHECK(sgd_aggregate(parts, 0.5).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("shape mismatch is a protocol error") {
    std::vector<Vector> parts = {a, Vector::Zero(3)};
    CHECK_THROWS_AS(sgd_aggregate(parts, 1.0), ProtocolError);
  }
}

TEST_CASE("splitting a table across clients recomposes the unsplit gradient") {
  Rng rng(31);
  const Index n = 24, d = 3;
  Matrix rows = random_matrix(rng, n, d);
  Matrix y_agg = random_matrix(rng, n, 1);
  IntVector counts(n);
  for (Index j = 0; j < n; ++j) counts(j) = 1 + static_cast<int>(rng.below(4));
  const double total = static_cast<double>(counts.sum());
  LocalModel model = LocalModel::init(ModelSpec{ModelKind::linear, d, 1, 16, false, 0});
  for (Index k = 0; k < d; ++k) model.params()(k) = rng.gaussian();

  // Unsplit: whole-table weighted gradient, scaled by 1/total.
  Vector unsplit = model.backward(rows, y_agg) / total;
  // Split into 3 ranges; each client contributes its unscaled partial.
  std::vector<Vector> partials;
  const Index cut1 = 7, cut2 = 15;
  for (auto [lo, hi] : {std::pair<Index, Index>{0, cut1}, {cut1, cut2}, {cut2, n}}) {
    partials.push_back(model.backward(rows.middleRows(lo, hi - lo),
                                      y_agg.middleRows(lo, hi - lo)));
  }
  Vector split = sgd_aggregate(partials, 1.0 / total);
  CHECK((split - unsplit).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("consensus theta update on an empty partition is exact") {
  LocalModel model = LocalModel::init(ModelSpec{ModelKind::linear, 2, 1, 16, false, 0});
  Matrix rows(0, 2);
  Matrix y_agg(0, 1);
  IntVector counts(0);
  AdmmLocalTerm term{rows, y_agg, counts, 1.0, 1.0};
  Vector w(2), u(2);
  w << 3, 4;
  u << 1, -1;
  consensus_theta_update(model, term, w, u, ThetaUpdateOptions{1.0, 20, 0.1, std::nullopt});
  CHECK(model.params()(0) == 2.0);
  CHECK(model.params()(1) == 5.0);
}

TEST_CASE("quadratic theta subproblem reaches the normal-equation solution") {
  Rng rng(32);
  const Index n = 30, d = 4;
  Matrix rows = random_matrix(rng, n, d);
  Matrix y_agg = random_matrix(rng, n, 1);
  IntVector counts = IntVector::Ones(n);
  const double rho = 1.0, rho_h = 0.8, inv_n = 1.0 / 100.0;
  Vector w = random_matrix(rng, d, 1);
  Vector u = random_matrix(rng, d, 1);
  AdmmLocalTerm term{rows, y_agg, counts, rho, inv_n};

  // Closed form: (inv_n rho X^T G X + rho_h I) theta = -inv_n X^T Y + rho_h (w - u).
  Matrix lhs = inv_n * rho * rows.transpose() * counts.cast<double>().asDiagonal() * rows;
  lhs.diagonal().array() += rho_h;
  Vector rhs = -inv_n * rows.transpose() * y_agg + rho_h * (w - u);
  Vector expected = lhs.ldlt().solve(rhs);

  LocalModel model = LocalModel::init(ModelSpec{ModelKind::linear, d, 1, 16, false, 0});
  consensus_theta_update(model, term, w, u, ThetaUpdateOptions{rho_h, 100, 0.5, std::nullopt});
  CHECK((model.params() - expected).lpNorm<Eigen::Infinity>() <= 1e-4);
}

TEST_CASE("large rho_h pins theta to w - u") {
  Rng rng(33);
  const Index n = 10, d = 3;
  Matrix rows = random_matrix(rng, n, d);
  Matrix y_agg = random_matrix(rng, n, 1);
  IntVector counts = IntVector::Ones(n);
  AdmmLocalTerm term{rows, y_agg, counts, 1.0, 1.0 / 50.0};
  Vector w = random_matrix(rng, d, 1);
  Vector u = random_matrix(rng, d, 1);
  LocalModel model = LocalModel::init(ModelSpec{ModelKind::linear, d, 1, 16, false, 0});
  model.params() = w - u;  // warm start at the proximal point
  consensus_theta_update(model, term, w, u,
                         ThetaUpdateOptions{1e6, 50, 1e-6, std::nullopt});
  CHECK((model.params() - (w - u)).lpNorm<Eigen::Infinity>() <= 1e-3);
}

TEST_CASE("divergence raises a numerical error suggesting a smaller step") {
  Rng rng(34);
  const Index n = 20, d = 3;
  Matrix rows = 10.0 * random_matrix(rng, n, d);
  Matrix y_agg = random_matrix(rng, n, 1);
  IntVector counts = IntVector::Constant(n, 5);
  AdmmLocalTerm term{rows, y_agg, counts, 2.0, 1.0};
  Vector w = Vector::Zero(d), u = Vector::Zero(d);
  LocalModel model = LocalModel::init(ModelSpec{ModelKind::linear, d, 1, 16, false, 0});
  model.params() << 1, 1, 1;
  CHECK_THROWS_WITH_AS(
      consensus_theta_update(model, term, w, u, ThetaUpdateOptions{1.0, 200, 5.0, std::nullopt}),
      doctest::Contains("smaller"), NumericalError);
}

TEST_CASE("w-update closed forms") {
  Vector mask = Vector::Ones(1);
  Vector theta_bar(1), u_bar(1);
  theta_bar << 0.6;
  u_bar << 0.4;

  SUBCASE("beta = 0 passes theta_bar + u_bar through") {
    Vector w = consensus_w_update(theta_bar, u_bar, RegKind::l2, 0.0, 2, 1.0, mask);
    CHECK(w(0) == doctest::Approx(1.0));
  }
  SUBCASE("scalar calculus example") {
    // argmin 0.5 w^2 + (w - 1)^2 = 2/3 with beta=0.5, m=2, rho_h=1.
    Vector w = consensus_w_update(theta_bar, u_bar, RegKind::l2, 0.5, 2, 1.0, mask);
    const double expected =
        oracle::golden_section([](double v) { return 0.5 * v * v + (v - 1.0) * (v - 1.0); },
                               -10, 10);
    CHECK(w(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w(0) == doctest::Approx(expected).epsilon(1e-6));
  }
  SUBCASE("idempotent under identical inputs") {
    Vector w1 = consensus_w_update(theta_bar, u_bar, RegKind::l2, 0.5, 2, 1.0, mask);
    Vector w2 = consensus_w_update(theta_bar, u_bar, RegKind::l2, 0.5, 2, 1.0, mask);
    CHECK(w1 == w2);
  }
  SUBCASE("bias coordinates skip the penalty") {
    Vector mask2(2), tb(2), ub(2);
    mask2 << 1, 0;
    tb << 1, 1;
    ub << 0, 0;
    Vector w = consensus_w_update(tb, ub, RegKind::l2, 0.5, 2, 1.0, mask2);
    CHECK(w(0) == doctest::Approx(2.0 / 3.0));
    CHECK(w(1) == doctest::Approx(1.0));
  }
}

TEST_CASE("u-update arithmetic") {
  Vector u = Vector::Zero(2);
  Vector theta(2), w(2);

  SUBCASE("theta equal to w leaves u unchanged") {
    theta << 1, 2;
    w << 1, 2;
    consensus_u_update(u, theta, w);
    CHECK(u.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single advance") {
    theta << 2, 3;
    w << 1, 1;
    consensus_u_update(u, theta, w);
    CHECK(u(0) == 1.0);
    CHECK(u(1) == 2.0);
  }
  SUBCASE("k rounds with constant difference accumulate linearly") {
    theta << 2, 0;
    w << 1, 0;
    for (int k = 0; k < 5; ++k) consensus_u_update(u, theta, w);
    CHECK(u(0) == 5.0);
  }
}

TEST_CASE("dual bookkeeping: sum of u moves by sum(theta) - Q w") {
  Rng rng(35);
  const int q_count = 4;
  const Index d = 6;
  std::vector<Vector> u(q_count), theta(q_count);
  for (int q = 0; q < q_count; ++q) {
    u[q] = random_matrix(rng, d, 1);
    theta[q] = random_matrix(rng, d, 1);
  }
  Vector w = random_matrix(rng, d, 1);
  Vector before = Vector::Zero(d);
  for (const auto& v : u) before += v;
  for (int q = 0; q < q_count; ++q) consensus_u_update(u[q], theta[q], w);
  Vector after = Vector::Zero(d);
  for (const auto& v : u) after += v;
  Vector expected = before;
  for (const auto& t : theta) expected += t;
  expected -= static_cast<double>(q_count) * w;
  CHECK((after - expected).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("consensus ADMM agrees with the unsplit solve on a ridge task") {
  // One organization's theta-subproblem split across 2 clients; the fixed
  // point must match the whole-table closed form (m = Q here, so the
  // w-update coefficient is unambiguous).
  Rng rng(36);
  const Index n = 40, d = 5;
  Matrix rows = random_matrix(rng, n, d);
  Matrix y_agg = random_matrix(rng, n, 1);
  IntVector counts = IntVector::Ones(n);
  const double rho = 1.0, rho_h = 1.0, beta = 0.05, inv_n = 1.0 / static_cast<double>(n);
  const int q_count = 2, m_orgs = 2;

  // Unsplit optimum of inv_n sum [Y f + rho/2 f^2] + beta ||theta||^2.
  Matrix lhs = inv_n * rho * rows.transpose() * rows;
  lhs.diagonal().array() += 2.0 * beta;
  Vector target = lhs.ldlt().solve(-inv_n * rows.transpose() * y_agg);

  std::vector<LocalModel> clients;
  for (int q = 0; q < q_count; ++q) {
    clients.push_back(LocalModel::init(ModelSpec{ModelKind::linear, d, 1, 16, false, 0}));
  }
  ConsensusState cs = ConsensusState::init(d, q_count, rho_h, 100, 60);
  const Index half = n / 2;
  for (int round = 0; round < cs.inner_rounds; ++round) {
    Vector theta_bar = Vector::Zero(d), u_bar = Vector::Zero(d);
    for (int q = 0; q < q_count; ++q) {
      theta_bar += clients[q].params();
      u_bar += cs.u[q];
    }
    theta_bar /= q_count;
    u_bar /= q_count;
    cs.w = consensus_w_update(theta_bar, u_bar, RegKind::l2, beta, m_orgs, rho_h,
                              clients[0].reg_mask());
    for (int q = 0; q < q_count; ++q) consensus_u_update(cs.u[q], clients[q].params(), cs.w);
    for (int q = 0; q < q_count; ++q) {
      const Index lo = q == 0 ? 0 : half;
      const Index len = q == 0 ? half : n - half;
      AdmmLocalTerm term{rows.middleRows(lo, len), y_agg.middleRows(lo, len),
                         counts.segment(lo, len), rho, inv_n};
      consensus_theta_update(clients[q], term, cs.w, cs.u[q],
                             ThetaUpdateOptions{rho_h, cs.local_steps, 0.3, std::nullopt});
    }
  }
  for (int q = 0; q < q_count; ++q) {
    CHECK((clients[q].params() - cs.w).lpNorm<Eigen::Infinity>() <= 1e-3);
  }
  CHECK((cs.w - target).lpNorm<Eigen::Infinity>() <= 1e-3);
}

}  // TEST_SUITE
