#pragma once

#include <cstdint>
#include <filesystem>

#include "sldc/feature_store.hpp"
#include "sldc/gaussian_stats.hpp"

namespace sldc {

inline constexpr double kDefaultRidgeGamma = 1e-4;
inline constexpr double kDefaultAlphaTemp = 1.0;

/// Linear latent-space transition operator fitted by ridge regression on
/// paired (previous model, current model) features.
struct LinearOperator {
  Matrix a;
  double gamma = kDefaultRidgeGamma;
  double alpha_temp = kDefaultAlphaTemp;
  std::uint64_t n_fit = 0;
  double w_applied = 0.0;     // identity-blend weight, 0 until reweighted
  double residual_mse = 0.0;  // mean squared residual on the fit pairs (before blending)

  Eigen::Index dim() const { return a.rows(); }
};

// A = Yᵀ X (Xᵀ X + gamma I)^-1 for row-sample matrices X = x_prev, Y = x_curr,
// via a Cholesky solve on the d×d Gram matrix.
LinearOperator fit_ridge(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr, double gamma);

// A ← (1 − w) A + w I with w = exp(−n_t / (alpha_temp · d)).
LinearOperator reweight_identity(const LinearOperator& op, std::uint64_t n_t, double alpha_temp,
                                 Eigen::Index d);

// Ridge fit on the task pairs stacked over unlabeled auxiliary pairs.
LinearOperator fit_with_ade(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr,
                            const FeatureMatrix& aux_prev, const FeatureMatrix& aux_curr,
                            double gamma);

ClassGaussian pushforward(const ClassGaussian& g, const LinearOperator& op);

// LOP1: "LOP1" | u32 d | f64 gamma | f64 alpha_temp | u64 n_fit | f64 w_applied |
// f64 a x d*d (row-major).
void write_operator(const LinearOperator& op, const std::filesystem::path& path);
LinearOperator load_linear_operator(const std::filesystem::path& path);

}  // namespace sldc
