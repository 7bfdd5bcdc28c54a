#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "sldc/drift_sim.hpp"
#include "sldc/error.hpp"
#include "sldc/linear_operator.hpp"
#include "sldc/weaknl_operator.hpp"

using namespace sldc;

namespace {

FeatureMatrix unlabeled(const Matrix& v) {
  return FeatureMatrix(v, std::vector<std::int32_t>(static_cast<std::size_t>(v.rows()), 0));
}

Matrix unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  Matrix m = oracle::random_matrix(n, d, rng);
  for (Eigen::Index i = 0; i < n; ++i) m.row(i).normalize();
  return m;
}

// Plain loops, no Eigen products: relu(W1 f + b1) then W2 h + b2.
Vector psi_by_hand(const Mlp& m, const Vector& f) {
  Vector h(m.hidden()), out(m.in_dim());
  for (Eigen::Index i = 0; i < m.hidden(); ++i) {
    double s = m.b1[i];
    for (Eigen::Index j = 0; j < m.in_dim(); ++j) s += m.w1(i, j) * f[j];
    h[i] = std::max(s, 0.0);
  }
  for (Eigen::Index i = 0; i < m.in_dim(); ++i) {
    double s = m.b2[i];
    for (Eigen::Index j = 0; j < m.hidden(); ++j) s += m.w2(i, j) * h[j];
    out[i] = s;
  }
  return out;
}

double smoothed(const std::vector<double>& log, std::size_t upto) {
  double s = log.front();
  for (std::size_t i = 1; i < upto; ++i) s = 0.98 * s + 0.02 * log[i];
  return s;
}

// Scalar Adam on gamma2·(c1 − 1)² over the two logits, nothing else.
double penalty_only_c1(double gamma2, const OperatorTrainConfig& cfg) {
  double l[2] = {std::log(0.9), std::log(0.1)}, m[2] = {0, 0}, v[2] = {0, 0};
  double c1 = 0.9;
  for (int t = 1; t <= cfg.steps; ++t) {
    c1 = 1.0 / (1.0 + std::exp(l[1] - l[0]));
    const double d = 2.0 * gamma2 * (c1 - 1.0);
    const double g[2] = {d * c1 * (1.0 - c1), -d * c1 * (1.0 - c1)};
    const double frac = cfg.steps > 1 ? static_cast<double>(t - 1) / (cfg.steps - 1) : 0.0;
    const double lr = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t)), vh = v[i] / (1.0 - std::pow(0.999, t));
      l[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  return 1.0 / (1.0 + std::exp(l[1] - l[0]));
}

}  // namespace

TEST_CASE("initial operator is 0.9 f + 0.1 psi(f)") {
  const WeakNonlinearOperator op = init_weaknl(6, 6, 3);
  CHECK(op.a == Matrix::Identity(6, 6));
  CHECK(op.c1() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(op.c2() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(op.gamma2 == 0.5);
  CHECK(op.psi.b1.isZero(0.0));
  CHECK(op.psi.b2.isZero(0.0));

  std::mt19937_64 rng(51);
  for (int i = 0; i < 5; ++i) {
    const Vector f = oracle::random_matrix(6, 1, rng).col(0);
    const Vector want = 0.9 * f + 0.1 * psi_by_hand(op.psi, f);
    CHECK((forward(op, f) - want).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("initialization is deterministic and respects the fan-in bound") {
  const WeakNonlinearOperator a = init_weaknl(4, 4, 7), b = init_weaknl(4, 4, 7);
  CHECK(a.psi.w1 == b.psi.w1);
  CHECK(a.psi.w2 == b.psi.w2);
  CHECK_FALSE(a.psi.w1 == init_weaknl(4, 4, 8).psi.w1);
  CHECK(a.psi.w1.cwiseAbs().maxCoeff() <= 0.5);  // 1/sqrt(4)
  CHECK(a.psi.w2.cwiseAbs().maxCoeff() <= 0.5);

  // Zero biases, so ||psi(f)|| <= ||W2|| ||relu(W1 f)|| <= ||W2|| ||W1|| for unit f,
  // and each Frobenius norm is at most sqrt(h·d)·bound = 2.
  const double bound = a.psi.w2.norm() * a.psi.w1.norm();
  CHECK(bound <= 4.0);
  std::mt19937_64 rng(52);
  const Matrix f = unit_rows(200, 4, rng);
  const Matrix out = a.psi.forward(f);
  for (Eigen::Index i = 0; i < out.rows(); ++i) CHECK(out.row(i).norm() <= bound + 1e-12);
}

TEST_CASE("forward corners and batch consistency") {
  std::mt19937_64 rng(53);
  WeakNonlinearOperator op = init_weaknl(5, 5, 1);
  const Matrix x = oracle::random_matrix(3, 5, rng);

  op.logits = {0.0, -std::numeric_limits<double>::infinity()};
  CHECK(op.c1() == 1.0);
  CHECK(forward(op, x) == x);

  op.logits = {-std::numeric_limits<double>::infinity(), 0.0};
  CHECK((forward(op, x) - op.psi.forward(x)).cwiseAbs().maxCoeff() < 1e-15);

  op = init_weaknl(5, 5, 2);
  op.a = oracle::random_matrix(5, 5, rng);
  const Matrix both = forward(op, Matrix(x.topRows(2)));
  CHECK(both.row(0).transpose() == forward(op, Vector(x.row(0).transpose())));
  CHECK(both.row(1).transpose() == forward(op, Vector(x.row(1).transpose())));

  CHECK_THROWS_AS(forward(op, Matrix(Matrix::Ones(2, 4))), Error);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 3; ++trial) {
    WeakNonlinearOperator op = init_weaknl(5, 7, 60 + trial);
    op.a = Matrix::Identity(5, 5) + 0.3 * oracle::random_matrix(5, 5, rng);
    op.psi.b1 = 0.1 * oracle::random_matrix(7, 1, rng).col(0);
    op.psi.b2 = 0.1 * oracle::random_matrix(5, 1, rng).col(0);
    op.logits = {0.4, -0.7};
    op.gamma2 = 0.8;
    const Matrix x = unit_rows(9, 5, rng), y = unit_rows(9, 5, rng);

    const auto analytic = oracle::flatten(weaknl_objective(op, x, y));
    const auto numeric = oracle::central_differences(
        oracle::parameters(op), [&] { return weaknl_objective(op, x, y).loss; });
    CHECK(oracle::max_rel_gap(analytic, numeric) < 1e-4);

    // Loss value itself against a direct evaluation.
    const auto [c1, c2] = op.coefficients();
    double direct = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector t = c1 * op.a * x.row(i).transpose() + c2 * psi_by_hand(op.psi, x.row(i).transpose());
      direct += (t - y.row(i).transpose()).squaredNorm();
    }
    direct = direct / 45.0 + 0.8 * (c1 - 1.0) * (c1 - 1.0);
    CHECK(weaknl_objective(op, x, y).loss == doctest::Approx(direct).epsilon(1e-12));

    // The pure-MLP objective against the same differences.
    const MlpGradient mg = mlp_objective(op.psi, x, y);
    WeakGradient as_weak;
    as_weak.psi = mg.psi;
    as_weak.a = Matrix::Zero(5, 5);
    auto mlp_analytic = oracle::flatten(as_weak);
    auto params = oracle::parameters(op);
    params.resize(params.size() - 25 - 2);
    mlp_analytic.resize(params.size());
    const auto mlp_numeric =
        oracle::central_differences(params, [&] { return mlp_objective(op.psi, x, y).loss; });
    CHECK(oracle::max_rel_gap(mlp_analytic, mlp_numeric) < 1e-4);
  }
}

TEST_CASE("training config validation") {
  OperatorTrainConfig cfg;
  CHECK(cfg.steps == 5000);
  CHECK(cfg.batch_size == 32);
  CHECK_NOTHROW(cfg.validate());
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.lr_end = 2e-3;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.lr_end = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("zero-drift training moves toward the identity") {
  std::mt19937_64 rng(55);
  const FeatureMatrix x = unlabeled(unit_rows(64, 8, rng));
  OperatorTrainConfig cfg;
  cfg.steps = 2000;
  const WeakNonlinearOperator start = init_weaknl(8, 8, 4);
  const WeakNonlinearOperator op = train_weaknl(start, x, x, cfg);
  REQUIRE(op.train_log.size() == 2000);
  const double initial = (forward(start, x.values()) - x.values()).squaredNorm() / (64.0 * 8.0);
  CHECK(op.final_mse < initial);
  CHECK(op.c1() > start.c1());
  CHECK(smoothed(op.train_log, 2000) < smoothed(op.train_log, 100));
}

TEST_CASE("simplex invariant holds throughout training and a huge gamma2 collapses to linear") {
  std::mt19937_64 rng(56);
  const Matrix x = unit_rows(48, 6, rng);
  Matrix y = x * (Matrix::Identity(6, 6) + 0.2 * oracle::random_matrix(6, 6, rng)).transpose();
  y = y.array().tanh().matrix();
  OperatorTrainConfig cfg;
  cfg.steps = 1;
  WeakNonlinearOperator op = init_weaknl(6, 6, 5);
  for (int step = 0; step < 300; ++step) {
    cfg.seed = static_cast<std::uint64_t>(step);
    op = train_weaknl(op, unlabeled(x), unlabeled(y), cfg);
    const auto [c1, c2] = op.coefficients();
    CHECK(c1 >= 0.0);
    CHECK(c2 >= 0.0);
    CHECK(std::abs(c1 + c2 - 1.0) <= 1e-15);
  }

  // With gamma2 = 1e6 the penalty swamps the data term, so c1 follows Adam on
  // the penalty alone. Adam's step shrinks as that gradient decays, which caps
  // c1 near 0.991 after the default 5000 steps; 0.999 needs about 20000.
  cfg = {};
  const WeakNonlinearOperator stiff = train_weaknl(init_weaknl(6, 6, 5, 1e6), unlabeled(x), unlabeled(y), cfg);
  CHECK(stiff.c1() == doctest::Approx(penalty_only_c1(1e6, cfg)).epsilon(1e-3));
  CHECK(stiff.c1() > 0.99);
  cfg.steps = 20000;
  const WeakNonlinearOperator longer = train_weaknl(init_weaknl(6, 6, 5, 1e6), unlabeled(x), unlabeled(y), cfg);
  CHECK(longer.c1() >= 0.999);
}

TEST_CASE("weak-nonlinear fit beats the ridge residual on weakly nonlinear drift") {
  std::vector<double> weak, ridge;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SimConfig sim = sim_preset("weak_nonlinear");
    sim.tasks = 2;
    sim.seed = seed;
    const SimStream s = gen_stream(sim);
    const TaskRecord& rec = s.tasks[1];
    OperatorTrainConfig cfg;
    cfg.seed = seed;
    const WeakNonlinearOperator op =
        train_weaknl(init_weaknl(s.dim(), s.dim(), seed), rec.train_prev, rec.train_curr, cfg);
    weak.push_back(op.final_mse);
    ridge.push_back(fit_ridge(rec.train_prev, rec.train_curr, kDefaultRidgeGamma).residual_mse);
    CHECK(smoothed(op.train_log, 5000) < smoothed(op.train_log, 100));
  }
  CHECK(oracle::median(weak) <= oracle::median(ridge));
}

TEST_CASE("pure-MLP baseline is deterministic and reduces its loss") {
  std::mt19937_64 rng(57);
  const FeatureMatrix x = unlabeled(unit_rows(40, 6, rng));
  OperatorTrainConfig cfg;
  cfg.steps = 1500;
  cfg.weight_decay = 1e-6;
  cfg.seed = 3;
  const MlpTrainResult a = train_mlpdc(x, x, 6, cfg);
  const MlpTrainResult b = train_mlpdc(x, x, 6, cfg);
  CHECK(a.psi.w1 == b.psi.w1);
  CHECK(a.psi.w2 == b.psi.w2);
  CHECK(a.psi.b2 == b.psi.b2);
  CHECK(a.final_mse == b.final_mse);
  CHECK(a.final_mse <= a.initial_mse);
  CHECK(a.train_log.size() == 1500);
  CHECK_THROWS_AS(train_mlpdc(x, x, 0, cfg), Error);
}

TEST_CASE("non-finite loss reports divergence") {
  const FeatureMatrix huge = unlabeled(Matrix::Constant(4, 3, 1e200));
  OperatorTrainConfig cfg;
  cfg.steps = 10;
  try {
    train_weaknl(init_weaknl(3, 3, 0), huge, huge, cfg);
    FAIL("diverging run accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numerical);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
  CHECK_THROWS_AS(train_mlpdc(huge, huge, 3, cfg), Error);
}

TEST_CASE("Monte Carlo compensation through exact and linear operators") {
  std::mt19937_64 rng(58);
  const Eigen::Index d = 4;
  const ClassGaussian g{2, oracle::random_matrix(d, 1, rng).col(0), oracle::random_spd(d, rng), 11};

  WeakNonlinearOperator op = init_weaknl(d, d, 9);
  op.logits = {0.0, -std::numeric_limits<double>::infinity()};

  // Identity pipe: exactly the re-estimate of the same draws.
  const ClassGaussian same = mc_compensate(op, g, 10 * d, 17);
  const ClassGaussian direct = reestimate(sample(g, 10 * d, 17), 2);
  CHECK((same.mu - direct.mu).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((same.sigma - direct.sigma).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(same.class_id == 2);
  CHECK(same.n_source == 11);

  // Linear operator: the empirical pushforward is exact, so it equals the
  // closed form applied to the re-estimated draws.
  op.a = oracle::random_matrix(d, d, rng);
  for (Eigen::Index n : {10 * d, 1000 * d}) {
    const ClassGaussian mc = mc_compensate(op, g, n, 23);
    const ClassGaussian closed = linear_pushforward(reestimate(sample(g, n, 23), 2), op.a);
    CHECK(oracle::rel_err(mc.sigma, closed.sigma) < 1e-12);
    CHECK(oracle::rel_err(mc.mu, closed.mu) < 1e-12);
  }

  // Against the population pushforward the error is Monte Carlo noise of
  // order sqrt((d+1)/n), averaged over seeds to keep the check stable.
  const ClassGaussian truth = linear_pushforward(g, op.a);
  for (Eigen::Index n : {10 * d, 1000 * d}) {
    std::vector<double> errs;
    for (std::uint64_t s = 0; s < 21; ++s)
      errs.push_back(oracle::rel_err(mc_compensate(op, g, n, 100 + s).sigma, truth.sigma));
    CHECK(oracle::median(errs) < 2.0 * std::sqrt(static_cast<double>(d + 1) / static_cast<double>(n)));
  }

  CHECK_THROWS_AS(mc_compensate(op, g, d, 1), Error);
  CHECK_NOTHROW(mc_compensate(op.psi, g, d + 1, 1));
}

TEST_CASE("operator file round trip") {
  std::mt19937_64 rng(59);
  WeakNonlinearOperator op = init_weaknl(3, 5, 4, 0.7);
  op.a = oracle::random_matrix(3, 3, rng);
  op.psi.b1 = oracle::random_matrix(5, 1, rng).col(0);
  op.logits = {0.3, -1.1};
  const auto path = std::filesystem::temp_directory_path() / "sldc_weak.wnl";
  write_operator(op, path);
  const WeakNonlinearOperator back = load_weak_operator(path);
  CHECK(back.a == op.a);
  CHECK(back.psi.w1 == op.psi.w1);
  CHECK(back.psi.b1 == op.psi.b1);
  CHECK(back.psi.w2 == op.psi.w2);
  CHECK(back.psi.b2 == op.psi.b2);
  CHECK(back.gamma2 == op.gamma2);
  CHECK(back.c1() == doctest::Approx(op.c1()).epsilon(1e-15));
  const Matrix x = oracle::random_matrix(4, 3, rng);
  CHECK((forward(back, x) - forward(op, x)).cwiseAbs().maxCoeff() < 1e-14);
  // header 4+4+4, three scalars, then a, w1, b1, w2, b2
  CHECK(std::filesystem::file_size(path) == 12 + 24 + 8 * (9 + 15 + 5 + 15 + 3));

  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(load_weak_operator(path), Error);
}
