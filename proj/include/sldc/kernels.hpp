#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version (the one the
// library calls) and a plain serial reference in `serial::` kept for tests
// and benchmarks. Reductions use a fixed row-block partition combined in
// block order, so results do not depend on the thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "sldc/types.hpp"

namespace sldc::kernels {

inline constexpr Eigen::Index kRowBlock = 256;

struct Moments {
  Vector mean;
  Matrix cov;  // 1/n normalization, symmetrized
};

// xᵀx for an n×d row-sample matrix.
Matrix gram(const Matrix& x);

// yᵀx for paired n×d matrices (row i of x pairs with row i of y).
Matrix cross(const Matrix& x, const Matrix& y);

// Sample mean and population covariance (two-pass). Requires n >= 1.
Moments moments(const Matrix& x);

// Scales nonzero rows to unit norm in place; returns the number of zero rows.
Eigen::Index normalize_rows(Matrix& x);

// Row-wise argmax of x·weightᵀ + bias; ties go to the smallest entry of
// `class_ids`. Returns the winning class id per row.
std::vector<std::int32_t> predict(const Matrix& weight, const Vector& bias,
                                  std::span<const std::int32_t> class_ids, const Matrix& x);

// Number of positions where a[i] == b[i].
std::int64_t count_equal(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

namespace serial {

Matrix gram(const Matrix& x);
Matrix cross(const Matrix& x, const Matrix& y);
Moments moments(const Matrix& x);
Eigen::Index normalize_rows(Matrix& x);
std::vector<std::int32_t> predict(const Matrix& weight, const Vector& bias,
                                  std::span<const std::int32_t> class_ids, const Matrix& x);

}  // namespace serial

}  // namespace sldc::kernels
