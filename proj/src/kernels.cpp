#include "sldc/kernels.hpp"

#include <cassert>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sldc::kernels {

namespace {

Eigen::Index block_count(Eigen::Index n) { return (n + kRowBlock - 1) / kRowBlock; }

void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Per-row winner given a row of logits.
std::int32_t pick(const Eigen::Ref<const Eigen::RowVectorXd>& logits,
                  std::span<const std::int32_t> class_ids) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best] ||
        (logits[k] == logits[best] && class_ids[k] < class_ids[best])) {
      best = k;
    }
  }
  return class_ids[best];
}

}  // namespace

Matrix gram(const Matrix& x) { return cross(x, x); }

Matrix cross(const Matrix& x, const Matrix& y) {
  assert(x.rows() == y.rows() && x.cols() == y.cols());
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::Index blocks = block_count(n);
  std::vector<Matrix> partial(static_cast<std::size_t>(blocks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index start = b * kRowBlock;
    const Eigen::Index len = std::min(kRowBlock, n - start);
    partial[static_cast<std::size_t>(b)].noalias() =
        y.middleRows(start, len).transpose() * x.middleRows(start, len);
  }
  Matrix out = Matrix::Zero(d, d);
  for (const auto& p : partial) out += p;
  return out;
}

Moments moments(const Matrix& x) {
  assert(x.rows() >= 1);
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::Index blocks = block_count(n);
  std::vector<Vector> sums(static_cast<std::size_t>(blocks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index start = b * kRowBlock;
    const Eigen::Index len = std::min(kRowBlock, n - start);
    sums[static_cast<std::size_t>(b)] = x.middleRows(start, len).colwise().sum().transpose();
  }
  Vector mean = Vector::Zero(d);
  for (const auto& s : sums) mean += s;
  mean /= static_cast<double>(n);

  Matrix centered = x.rowwise() - mean.transpose();
  Matrix cov = gram(centered) / static_cast<double>(n);
  symmetrize(cov);
  return {std::move(mean), std::move(cov)};
}

Eigen::Index normalize_rows(Matrix& x) {
  Eigen::Index zero_rows = 0;
#pragma omp parallel for schedule(static) reduction(+ : zero_rows)
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) {
      x.row(i) /= norm;
    } else {
      ++zero_rows;
    }
  }
  return zero_rows;
}

std::vector<std::int32_t> predict(const Matrix& weight, const Vector& bias,
                                  std::span<const std::int32_t> class_ids, const Matrix& x) {
  const Eigen::Index n = x.rows();
  std::vector<std::int32_t> out(static_cast<std::size_t>(n));
  if (weight.rows() == 0) return out;
  const Eigen::Index blocks = block_count(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index start = b * kRowBlock;
    const Eigen::Index len = std::min(kRowBlock, n - start);
    Matrix logits = x.middleRows(start, len) * weight.transpose();
    logits.rowwise() += bias.transpose();
    for (Eigen::Index i = 0; i < len; ++i)
      out[static_cast<std::size_t>(start + i)] = pick(logits.row(i), class_ids);
  }
  return out;
}

std::int64_t count_equal(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  assert(a.size() == b.size());
  std::int64_t hits = 0;
  const auto n = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static) reduction(+ : hits)
  for (std::int64_t i = 0; i < n; ++i) hits += (a[i] == b[i]) ? 1 : 0;
  return hits;
}

namespace serial {

Matrix gram(const Matrix& x) { return cross(x, x); }

Matrix cross(const Matrix& x, const Matrix& y) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) out(r, c) += y(i, r) * x(i, c);
  return out;
}

Moments moments(const Matrix& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Vector mean = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) mean[c] += x(i, c);
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        cov(r, c) += (x(i, r) - mean[r]) * (x(i, c) - mean[c]);
  cov /= static_cast<double>(n);
  symmetrize(cov);
  return {std::move(mean), std::move(cov)};
}

Eigen::Index normalize_rows(Matrix& x) {
  Eigen::Index zero_rows = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) sq += x(i, c) * x(i, c);
    if (sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(i, c) /= norm;
    } else {
      ++zero_rows;
    }
  }
  return zero_rows;
}

std::vector<std::int32_t> predict(const Matrix& weight, const Vector& bias,
                                  std::span<const std::int32_t> class_ids, const Matrix& x) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(x.rows()));
  if (weight.rows() == 0) return out;
  Eigen::RowVectorXd logits(weight.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < weight.rows(); ++k) {
      double z = bias[k];
      for (Eigen::Index c = 0; c < x.cols(); ++c) z += weight(k, c) * x(i, c);
      logits[k] = z;
    }
    out[static_cast<std::size_t>(i)] = pick(logits, class_ids);
  }
  return out;
}

}  // namespace serial

}  // namespace sldc::kernels
