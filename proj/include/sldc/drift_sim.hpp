#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sldc/feature_store.hpp"
#include "sldc/gaussian_stats.hpp"
#include "sldc/types.hpp"

namespace sldc {

enum class DriftKind { None, Rotation, Affine, WeakNonlinear };

DriftKind parse_drift_kind(const std::string& name);
std::string to_string(DriftKind kind);

struct SimConfig {
  int dim = 32;
  int tasks = 5;
  int classes_per_task = 10;
  int train_per_class = 50;
  int test_per_class = 50;
  double class_separation = 1.0;  // mean radius in units of within-class std, per sqrt(d)
  DriftKind drift_kind = DriftKind::Rotation;
  double drift_magnitude = 0.5;
  double kd_damping = 0.0;
  int aux_pool_size = 0;
  std::uint64_t seed = 0;

  // Rotation strength actually applied: magnitude · (1 − kd_damping).
  double effective_magnitude() const { return drift_magnitude * (1.0 - kd_damping); }
  void validate() const;
  bool operator==(const SimConfig&) const = default;
};

// Named stream presets used by the CLI and the acceptance suite:
// "none", "rotation", "weak_nonlinear", "small_task".
SimConfig sim_preset(const std::string& name);

// Ground-truth transition between consecutive latent spaces. On unit vectors
// f ↦ normalize(R f + b + eps · tanh(W f)); other inputs are scaled through, so
// apply(s·f) = s·apply(f) for s > 0.
struct DriftOperator {
  DriftKind kind = DriftKind::None;
  Matrix rotation;  // orthogonal
  Vector bias;      // zero unless affine/weak-nonlinear
  Matrix mix;       // W, d/8 nonzero rows; used only when eps > 0
  double eps = 0.0;

  static DriftOperator identity(Eigen::Index d);

  Eigen::Index dim() const { return rotation.rows(); }
  // True when the map is exactly f ↦ R f on the unit sphere.
  bool is_linear() const { return bias.isZero(0.0) && eps == 0.0; }
  Matrix apply(const Matrix& x) const;
};

struct TaskRecord {
  std::uint32_t task_id = 0;
  std::vector<std::int32_t> new_classes;
  FeatureMatrix train_prev;  // current-task samples under the previous model
  FeatureMatrix train_curr;  // the same samples under the current model
  FeatureMatrix test;        // every class seen so far, current model
  FeatureMatrix aux_prev;    // unlabeled pairs (labels are placeholders)
  FeatureMatrix aux_curr;
  std::optional<DriftOperator> truth;
};

struct SimStream {
  std::vector<TaskRecord> tasks;
  FeatureMatrix final_train;  // all tasks' training samples in the final space
  Eigen::Index dim() const { return final_train.dim(); }
};

SimStream gen_stream(const SimConfig& cfg);

// Pushes every Gaussian through the true operator: closed form when it is
// linear, otherwise Monte Carlo with mc_per_dim·d samples per class.
GaussianBank oracle_compensate(const TaskRecord& record, const GaussianBank& bank,
                               int mc_per_dim, std::uint64_t seed);

// Writes one FTD dump per task per view plus `manifest.ini`. Returns the manifest path.
std::filesystem::path export_stream(const SimStream& stream, const std::filesystem::path& dir);

}  // namespace sldc
