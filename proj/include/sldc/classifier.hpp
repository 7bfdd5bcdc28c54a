#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sldc/feature_store.hpp"
#include "sldc/gaussian_stats.hpp"

namespace sldc {

/// Incrementally expanded linear classifier: logits = W f + b, one row per class.
struct LinearClassifier {
  Matrix weight;  // k×d
  Vector bias;    // k
  std::vector<std::int32_t> class_ids;

  explicit LinearClassifier(Eigen::Index dim = 0) : weight(0, dim), bias(0) {}

  Eigen::Index dim() const { return weight.cols(); }
  Eigen::Index num_classes() const { return weight.rows(); }

  // Row index of a class; throws Coverage if unknown.
  Eigen::Index row_of(std::int32_t class_id) const;

  Vector logits(const Vector& f) const { return weight * f + bias; }
};

struct CeConfig {
  int steps = 300;
  int batch_size = 64;
  double lr_start = 0.5;
  double lr_end = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RefineConfig {
  int steps = 1000;
  int batch_size = 64;
  double lr_start = 32.0;
  double lr_end = 3.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Appends zero rows for `new_class_ids`; existing rows untouched. Throws Conflict on duplicates.
LinearClassifier expand(const LinearClassifier& clf, std::span<const std::int32_t> new_class_ids);

// Softmax over the logits of `subset` (max-subtracted), ordered as `subset`.
Vector softmax_probs(const LinearClassifier& clf, const Vector& f,
                     std::span<const std::int32_t> subset);

// Mini-batch gradient descent on cross-entropy with the softmax restricted to
// `subset`. Only the subset rows change. Throws Coverage if a label is outside.
LinearClassifier train_ce(LinearClassifier clf, const FeatureMatrix& feats,
                          std::span<const std::int32_t> subset, const CeConfig& cfg);

// Gradient descent on full-softmax cross-entropy over synthetic samples: each
// batch element picks a class uniformly and draws from its Gaussian. Throws
// Coverage if the bank misses a classifier class.
LinearClassifier refine(LinearClassifier clf, const GaussianBank& bank, const RefineConfig& cfg);

// Predicted class ids (argmax, ties to the lowest class id).
std::vector<std::int32_t> predict(const LinearClassifier& clf, const Matrix& x);

// Fraction of rows whose prediction equals the label; 0 with a warning when empty.
double evaluate(const LinearClassifier& clf, const FeatureMatrix& feats);

// LCLF: "LCLF" | u32 d | u32 k | i32 class_ids x k | f64 bias x k | f64 weight x k*d (row-major).
void write_classifier(const LinearClassifier& clf, const std::filesystem::path& path);
LinearClassifier load_classifier(const std::filesystem::path& path);

}  // namespace sldc
