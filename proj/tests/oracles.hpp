#pragma once
// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library code being checked.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sldc/types.hpp"
#include "sldc/weaknl_operator.hpp"

namespace oracle {

using sldc::Matrix;
using sldc::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
  return m;
}

inline Matrix random_spd(Eigen::Index d, std::mt19937_64& rng) {
  const Matrix b = random_matrix(d, d, rng);
  return b * b.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
}

// Normal-equation ridge solution with an explicit inverse: Yᵀ X (Xᵀ X + γ I)^-1.
inline Matrix ridge_explicit(const Matrix& x, const Matrix& y, double gamma) {
  const Eigen::Index d = x.cols();
  Matrix g = Matrix::Zero(d, d);
  Matrix c = Matrix::Zero(y.cols(), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    g += x.row(i).transpose() * x.row(i);
    c += y.row(i).transpose() * x.row(i);
  }
  g += gamma * Matrix::Identity(d, d);
  return c * g.fullPivLu().inverse();
}

// Textbook sample mean and 1/n covariance via explicit loops.
inline std::pair<Vector, Matrix> naive_moments(const Matrix& x) {
  const auto n = static_cast<double>(x.rows());
  Vector mu = Vector::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) mu += x.row(i).transpose();
  mu /= n;
  Matrix cov = Matrix::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector c = x.row(i).transpose() - mu;
    cov += c * c.transpose();
  }
  return {mu, cov / n};
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Every trainable scalar of a weak-nonlinear operator, in a fixed order.
inline std::vector<double*> parameters(sldc::WeakNonlinearOperator& op) {
  std::vector<double*> out;
  auto add = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
  };
  add(op.psi.w1);
  add(op.psi.b1);
  add(op.psi.w2);
  add(op.psi.b2);
  add(op.a);
  out.push_back(&op.logits[0]);
  out.push_back(&op.logits[1]);
  return out;
}

inline std::vector<double> flatten(const sldc::WeakGradient& g) {
  std::vector<double> out;
  auto add = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i]);
  };
  add(g.psi.w1);
  add(g.psi.b1);
  add(g.psi.w2);
  add(g.psi.b2);
  add(g.a);
  out.push_back(g.logits[0]);
  out.push_back(g.logits[1]);
  return out;
}

// Central differences of `loss` with respect to each pointed-to parameter.
inline std::vector<double> central_differences(const std::vector<double*>& params,
                                               const std::function<double()>& loss,
                                               double h = 1e-6) {
  std::vector<double> out;
  out.reserve(params.size());
  for (double* p : params) {
    const double saved = *p;
    *p = saved + h;
    const double up = loss();
    *p = saved - h;
    const double down = loss();
    *p = saved;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

// Largest per-entry relative gap, with a floor so entries near zero compare absolutely.
inline double max_rel_gap(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
