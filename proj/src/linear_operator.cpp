#include "sldc/linear_operator.hpp"

#include <cmath>

#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/error.hpp"
#include "sldc/kernels.hpp"

namespace sldc {

namespace {

void check_pairs(const FeatureMatrix& prev, const FeatureMatrix& curr, const char* what) {
  if (prev.dim() != curr.dim() || prev.size() != curr.size()) {
    throw Error(ErrorKind::Shape, fmt::format("{}: previous {}x{} vs current {}x{}", what,
                                              prev.size(), prev.dim(), curr.size(), curr.dim()));
  }
}

}  // namespace

LinearOperator fit_ridge(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr, double gamma) {
  check_pairs(x_prev, x_curr, "fit_ridge");
  if (!(gamma > 0.0)) throw Error(ErrorKind::Config, "ridge gamma must be positive");
  if (x_prev.size() == 0) throw Error(ErrorKind::EmptyInput, "fit_ridge: no feature pairs");

  const Eigen::Index d = x_prev.dim();
  const Matrix& x = x_prev.values();
  const Matrix& y = x_curr.values();

  Matrix system = kernels::gram(x);
  system = 0.5 * (system + system.transpose()).eval();
  system.diagonal().array() += gamma;
  const Matrix rhs = kernels::cross(x, y);  // Yᵀ X

  // A · system = rhs  ⇔  system · Aᵀ = rhsᵀ (system symmetric).
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Numerical, "fit_ridge: Cholesky of regularized Gram matrix failed");
  LinearOperator op;
  op.a = llt.solve(rhs.transpose()).transpose();
  if (!op.a.allFinite()) throw Error(ErrorKind::Numerical, "fit_ridge: non-finite solution");
  op.gamma = gamma;
  op.n_fit = static_cast<std::uint64_t>(x.rows());
  op.residual_mse = (x * op.a.transpose() - y).squaredNorm() / static_cast<double>(x.rows() * d);
  return op;
}

LinearOperator reweight_identity(const LinearOperator& op, std::uint64_t n_t, double alpha_temp,
                                 Eigen::Index d) {
  if (!(alpha_temp > 0.0)) throw Error(ErrorKind::Config, "alpha_temp must be positive");
  const double w = std::exp(-static_cast<double>(n_t) / (alpha_temp * static_cast<double>(d)));
  LinearOperator out = op;
  out.a = (1.0 - w) * op.a + w * Matrix::Identity(op.dim(), op.dim());
  out.alpha_temp = alpha_temp;
  out.w_applied = w;
  return out;
}

LinearOperator fit_with_ade(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr,
                            const FeatureMatrix& aux_prev, const FeatureMatrix& aux_curr,
                            double gamma) {
  check_pairs(aux_prev, aux_curr, "fit_with_ade (aux)");
  if (aux_prev.dim() != x_prev.dim()) {
    throw Error(ErrorKind::Shape, fmt::format("fit_with_ade: task d={} vs aux d={}", x_prev.dim(),
                                              aux_prev.dim()));
  }
  if (aux_prev.size() == 0) return fit_ridge(x_prev, x_curr, gamma);
  return fit_ridge(concat_rows(x_prev, aux_prev), concat_rows(x_curr, aux_curr), gamma);
}

ClassGaussian pushforward(const ClassGaussian& g, const LinearOperator& op) {
  return linear_pushforward(g, op.a);
}

void write_operator(const LinearOperator& op, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("LOP1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(op.dim()));
  w.put<double>(op.gamma);
  w.put<double>(op.alpha_temp);
  w.put<std::uint64_t>(op.n_fit);
  w.put<double>(op.w_applied);
  for (Eigen::Index r = 0; r < op.dim(); ++r)
    for (Eigen::Index c = 0; c < op.dim(); ++c) w.put<double>(op.a(r, c));
  io::write_file(path, w.bytes());
}

LinearOperator load_linear_operator(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  r.expect_magic("LOP1");
  LinearOperator op;
  const auto d = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  op.gamma = r.get<double>();
  op.alpha_temp = r.get<double>();
  op.n_fit = r.get<std::uint64_t>();
  op.w_applied = r.get<double>();
  r.require(static_cast<std::size_t>(d * d * 8));
  op.a.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index c = 0; c < d; ++c) op.a(i, c) = r.get<double>();
  if (!op.a.allFinite())
    throw Error(ErrorKind::Corruption, fmt::format("{}: non-finite operator", path.string()));
  return op;
}

}  // namespace sldc
