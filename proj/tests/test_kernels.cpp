#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "sldc/kernels.hpp"

using namespace sldc;

// Sizes straddle the row-block boundary so partial blocks are exercised.
TEST_CASE("parallel kernels agree with the serial references") {
  std::mt19937_64 rng(21);
  for (Eigen::Index n : {1, 7, 255, 256, 257, 1000}) {
    CAPTURE(n);
    const Matrix x = oracle::random_matrix(n, 6, rng);
    const Matrix y = oracle::random_matrix(n, 6, rng);
    CHECK((kernels::gram(x) - kernels::serial::gram(x)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((kernels::cross(x, y) - kernels::serial::cross(x, y)).cwiseAbs().maxCoeff() < 1e-10);

    const auto par = kernels::moments(x);
    const auto ser = kernels::serial::moments(x);
    CHECK((par.mean - ser.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((par.cov - ser.cov).cwiseAbs().maxCoeff() < 1e-12);

    Matrix a = x, b = x;
    a.row(0).setZero();
    b.row(0).setZero();
    CHECK(kernels::normalize_rows(a) == kernels::serial::normalize_rows(b));
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("gram, cross and moments match textbook formulas") {
  std::mt19937_64 rng(22);
  const Matrix x = oracle::random_matrix(300, 5, rng);
  const Matrix y = oracle::random_matrix(300, 5, rng);
  CHECK((kernels::gram(x) - x.transpose() * x).norm() < 1e-9);
  CHECK((kernels::cross(x, y) - y.transpose() * x).norm() < 1e-9);
  const auto [mu, cov] = oracle::naive_moments(x);
  const auto m = kernels::moments(x);
  CHECK((m.mean - mu).norm() < 1e-12);
  CHECK((m.cov - cov).norm() < 1e-12);
  CHECK(m.cov.isApprox(m.cov.transpose(), 0.0));
}

TEST_CASE("moments of a single row are the row and a zero covariance") {
  const Matrix x{{1.0, -2.0, 3.0}};
  const auto m = kernels::moments(x);
  CHECK(m.mean == x.row(0).transpose());
  CHECK(m.cov.isZero(0.0));
}

TEST_CASE("normalize_rows counts zero rows and leaves them alone") {
  Matrix x{{3.0, 4.0}, {0.0, 0.0}, {0.0, 2.0}};
  CHECK(kernels::normalize_rows(x) == 1);
  CHECK(x(0, 0) == doctest::Approx(0.6));
  CHECK(x.row(1).isZero(0.0));
  CHECK(x(2, 1) == 1.0);
}

TEST_CASE("predict breaks ties toward the lowest class id") {
  const std::vector<std::int32_t> ids{5, 2, 9};
  const Matrix w = Matrix::Zero(3, 2);
  const Vector b = Vector::Zero(3);
  const Matrix x = Matrix::Ones(4, 2);
  const auto p = kernels::predict(w, b, ids, x);
  for (auto c : p) CHECK(c == 2);
  CHECK(p == kernels::serial::predict(w, b, ids, x));

  Vector b2(3);
  b2 << 0.0, 0.0, 1.0;
  CHECK(kernels::predict(w, b2, ids, x)[0] == 9);
}

TEST_CASE("predict agrees with the serial reference on random problems") {
  std::mt19937_64 rng(23);
  const Matrix w = oracle::random_matrix(12, 7, rng);
  const Vector b = oracle::random_matrix(12, 1, rng).col(0);
  const Matrix x = oracle::random_matrix(600, 7, rng);
  std::vector<std::int32_t> ids(12);
  for (int i = 0; i < 12; ++i) ids[static_cast<std::size_t>(i)] = 40 - 3 * i;
  const auto par = kernels::predict(w, b, ids, x);
  CHECK(par == kernels::serial::predict(w, b, ids, x));
  CHECK(kernels::count_equal(par, par) == 600);
}
