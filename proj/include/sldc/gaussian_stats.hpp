#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "sldc/feature_store.hpp"
#include "sldc/seeding.hpp"
#include "sldc/types.hpp"

namespace sldc {

struct ClassGaussian {
  std::int32_t class_id = 0;
  Vector mu;
  Matrix sigma;
  std::uint64_t n_source = 0;

  Eigen::Index dim() const { return mu.size(); }
};

/// The per-class Gaussian bank. Keys are the covered class set.
class GaussianBank {
 public:
  // Throws Conflict if the class is already present.
  void insert(ClassGaussian g);
  // Throws Coverage if the class is absent.
  void replace(ClassGaussian g);

  const ClassGaussian& at(std::int32_t class_id) const;
  bool contains(std::int32_t class_id) const { return entries_.count(class_id) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Eigen::Index dim() const { return entries_.empty() ? 0 : entries_.begin()->second.dim(); }

  // Ascending class ids.
  std::vector<std::int32_t> class_ids() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::int32_t, ClassGaussian> entries_;
};

// Sample mean and 1/n population covariance of the rows. Throws EmptyInput for n = 0.
ClassGaussian estimate_gaussian(const Matrix& samples, std::int32_t class_id);
ClassGaussian estimate_gaussian(const FeatureMatrix& features, std::int32_t class_id);

// Re-estimation after a Monte Carlo transform; same contract as estimate_gaussian.
ClassGaussian reestimate(const FeatureMatrix& samples, std::int32_t class_id);

// (A mu, A sigma Aᵀ), symmetrized.
ClassGaussian linear_pushforward(const ClassGaussian& g, const Matrix& a);

/// Cached Cholesky factor for repeated draws from one Gaussian. Plain
/// Cholesky first; on failure sigma + eps·I with eps = 1e-6·trace/d. An
/// all-zero sigma gives a zero factor (every draw equals mu).
class GaussianSampler {
 public:
  explicit GaussianSampler(const ClassGaussian& g);

  // `count` draws as rows.
  Matrix draw(Eigen::Index count, Rng& rng) const;
  // One draw written into `out` (length d); `scratch` must also have length d.
  void draw_into(Eigen::Ref<Vector> out, Eigen::Ref<Vector> scratch, Rng& rng) const;

  bool jittered() const { return jittered_; }
  const Matrix& factor() const { return factor_; }

 private:
  Vector mu_;
  Matrix factor_;
  bool jittered_ = false;
};

FeatureMatrix sample(const ClassGaussian& g, Eigen::Index count, std::uint64_t seed);

// GBNK: "GBNK" | u16 version=1 | u32 class count | per class: i32 class_id,
// u64 n_source, f64 mu x d, f64 sigma x d*d (row-major). The dimension is not
// stored; the reader infers it from the payload size.
inline constexpr std::uint16_t kBankVersion = 1;

void write_bank(const GaussianBank& bank, const std::filesystem::path& path);
GaussianBank load_bank(const std::filesystem::path& path);

}  // namespace sldc
