#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "sldc/feature_store.hpp"
#include "sldc/gaussian_stats.hpp"
#include "sldc/types.hpp"

namespace sldc {

inline constexpr double kDefaultWeakGamma = 0.5;

/// d → h → d perceptron with one rectified hidden layer and a linear output.
struct Mlp {
  Matrix w1;  // h×d
  Vector b1;  // h
  Matrix w2;  // d×h
  Vector b2;  // d

  Eigen::Index in_dim() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }

  // Weights uniform in ±1/sqrt(fan_in), biases zero.
  static Mlp init(Eigen::Index d, Eigen::Index h, Rng& rng);

  // Rows of `x` mapped independently.
  Matrix forward(const Matrix& x) const;
};

/// T(f) = c1·A f + c2·psi(f), with (c1, c2) = softmax(logits).
struct WeakNonlinearOperator {
  Matrix a;
  Mlp psi;
  std::array<double, 2> logits{};
  double gamma2 = kDefaultWeakGamma;
  std::vector<double> train_log;
  double final_mse = 0.0;

  Eigen::Index dim() const { return a.rows(); }
  std::array<double, 2> coefficients() const;
  double c1() const { return coefficients()[0]; }
  double c2() const { return coefficients()[1]; }
};

struct OperatorTrainConfig {
  int steps = 5000;
  int batch_size = 32;
  double lr_start = 1e-3;
  double lr_end = 5e-4;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  // Throws Config on violated invariants.
  void validate() const;
};

// A = I, psi freshly initialized, (c1, c2) = (0.9, 0.1).
WeakNonlinearOperator init_weaknl(Eigen::Index d, Eigen::Index hidden, std::uint64_t seed,
                                  double gamma2 = kDefaultWeakGamma);

Matrix forward(const WeakNonlinearOperator& op, const Matrix& x);
Vector forward(const WeakNonlinearOperator& op, const Vector& f);

// Objective value and gradients for one batch. The loss is the mean squared
// error over all B·d entries plus gamma2·(c1 − 1)².
struct WeakGradient {
  double loss = 0.0;
  Matrix a;
  Mlp psi;
  std::array<double, 2> logits{};
};
WeakGradient weaknl_objective(const WeakNonlinearOperator& op, const Matrix& x, const Matrix& y);

// Mean squared error over all entries of psi(x) − y, with gradients.
struct MlpGradient {
  double loss = 0.0;
  Mlp psi;
};
MlpGradient mlp_objective(const Mlp& psi, const Matrix& x, const Matrix& y);

// Adam on mini-batches drawn with replacement, learning rate decayed linearly
// from lr_start to lr_end. Throws Numerical on a non-finite loss.
WeakNonlinearOperator train_weaknl(WeakNonlinearOperator op, const FeatureMatrix& x_prev,
                                   const FeatureMatrix& x_curr, const OperatorTrainConfig& cfg);

struct MlpTrainResult {
  Mlp psi;
  std::vector<double> train_log;
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

// Pure-MLP compensation baseline: T(f) = psi(f), with decoupled weight decay.
MlpTrainResult train_mlpdc(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr,
                           Eigen::Index hidden, const OperatorTrainConfig& cfg);

// Row-wise feature transform used for Monte Carlo compensation.
using FeatureTransform = std::function<Matrix(const Matrix&)>;

// Draw n_samples from g, map them, and re-estimate. Requires n_samples >= d + 1.
ClassGaussian mc_compensate(const FeatureTransform& transform, const ClassGaussian& g,
                            Eigen::Index n_samples, std::uint64_t seed);
ClassGaussian mc_compensate(const WeakNonlinearOperator& op, const ClassGaussian& g,
                            Eigen::Index n_samples, std::uint64_t seed);
ClassGaussian mc_compensate(const Mlp& psi, const ClassGaussian& g, Eigen::Index n_samples,
                            std::uint64_t seed);

// WNL1: "WNL1" | u32 d | u32 h | f64 gamma2 | f64 c1 | f64 c2 | f64 a x d*d |
// f64 w1 x h*d | f64 b1 x h | f64 w2 x d*h | f64 b2 x d. Matrices row-major.
void write_operator(const WeakNonlinearOperator& op, const std::filesystem::path& path);
WeakNonlinearOperator load_weak_operator(const std::filesystem::path& path);

}  // namespace sldc
