#include "sldc/drift_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "sldc/error.hpp"
#include "sldc/kernels.hpp"
#include "sldc/linear_operator.hpp"
#include "sldc/manifest.hpp"
#include "sldc/seeding.hpp"
#include "sldc/weaknl_operator.hpp"

namespace sldc {

namespace {

// Bias norm and tanh amplitude per unit of effective drift magnitude.
constexpr double kBiasScale = 0.2;
constexpr double kTanhScale = 0.3;
// The tanh component reads d/8 random directions; pre-activations are N(0, gain²)
// on unit-norm input, so the map bends smoothly across the class layout.
constexpr Eigen::Index kTanhRankDivisor = 8;
constexpr double kTanhGain = 1.5;
constexpr std::uint64_t kAuxSalt = 0xA5A5A5A5ULL;

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Vector unit_vector(Eigen::Index d, Rng& rng) {
  Vector v = gaussian_matrix(d, 1, rng).col(0);
  return v / v.norm();
}

DriftOperator draw_drift(const SimConfig& cfg, Rng& rng) {
  const Eigen::Index d = cfg.dim;
  const double beta = cfg.effective_magnitude();
  if (cfg.drift_kind == DriftKind::None || beta == 0.0) return DriftOperator::identity(d);

  DriftOperator op;
  op.kind = cfg.drift_kind;
  // Skew generator with spectrum of order one; exp(beta·S) is a partial rotation.
  const Matrix b = gaussian_matrix(d, d, rng);
  const Matrix skew = (b - b.transpose()) / std::sqrt(2.0 * static_cast<double>(d));
  op.rotation = (beta * skew).exp();
  op.bias = Vector::Zero(d);
  op.mix = Matrix::Zero(d, d);
  if (cfg.drift_kind == DriftKind::Affine || cfg.drift_kind == DriftKind::WeakNonlinear)
    op.bias = kBiasScale * beta * unit_vector(d, rng);
  if (cfg.drift_kind == DriftKind::WeakNonlinear) {
    const Eigen::Index rank = std::max<Eigen::Index>(1, d / kTanhRankDivisor);
    const Matrix q = gaussian_matrix(d, rank, rng).householderQr().householderQ() *
                     Matrix::Identity(d, rank);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(d));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    const double scale = kTanhGain * std::sqrt(static_cast<double>(d));
    for (Eigen::Index k = 0; k < rank; ++k)
      op.mix.row(rows[static_cast<std::size_t>(k)]) = scale * q.col(k).transpose();
    op.eps = kTanhScale * beta;
  }
  return op;
}

FeatureMatrix select(const Matrix& values, const std::vector<std::int32_t>& labels,
                     const std::vector<Eigen::Index>& rows, std::uint32_t task_id,
                     const std::string& tag) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), values.cols());
  std::vector<std::int32_t> out_labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
    out_labels[i] = labels[static_cast<std::size_t>(rows[i])];
  }
  return FeatureMatrix(std::move(out), std::move(out_labels), task_id, tag);
}

}  // namespace

DriftKind parse_drift_kind(const std::string& name) {
  if (name == "none") return DriftKind::None;
  if (name == "rotation") return DriftKind::Rotation;
  if (name == "affine") return DriftKind::Affine;
  if (name == "weak_nonlinear") return DriftKind::WeakNonlinear;
  throw Error(ErrorKind::Config, fmt::format("unknown drift kind '{}'", name));
}

std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::None: return "none";
    case DriftKind::Rotation: return "rotation";
    case DriftKind::Affine: return "affine";
    case DriftKind::WeakNonlinear: return "weak_nonlinear";
  }
  return "none";
}

void SimConfig::validate() const {
  if (dim < 1 || tasks < 1 || classes_per_task < 1 || train_per_class < 1 || test_per_class < 1)
    throw Error(ErrorKind::Config, "simulator counts must be at least 1");
  if (aux_pool_size < 0) throw Error(ErrorKind::Config, "aux_pool_size must be non-negative");
  if (!(class_separation > 0.0)) throw Error(ErrorKind::Config, "class_separation must be positive");
  if (drift_magnitude < 0.0 || drift_magnitude > 1.0 || kd_damping < 0.0 || kd_damping > 1.0)
    throw Error(ErrorKind::Config, "drift_magnitude and kd_damping must lie in [0, 1]");
}

SimConfig sim_preset(const std::string& name) {
  SimConfig cfg;
  if (name == "none") {
    cfg.dim = 32;
    cfg.tasks = 10;
    cfg.classes_per_task = 10;
    cfg.train_per_class = 40;
    cfg.test_per_class = 40;
    cfg.drift_kind = DriftKind::None;
  } else if (name == "rotation") {
    cfg.dim = 32;
    cfg.tasks = 5;
    cfg.classes_per_task = 10;
    cfg.train_per_class = 40;
    cfg.test_per_class = 40;
    cfg.drift_kind = DriftKind::Rotation;
    cfg.drift_magnitude = 0.5;
  } else if (name == "weak_nonlinear") {
    cfg.dim = 64;
    cfg.tasks = 10;
    cfg.classes_per_task = 20;
    cfg.train_per_class = 40;
    cfg.test_per_class = 30;
    cfg.drift_kind = DriftKind::WeakNonlinear;
    cfg.drift_magnitude = 0.5;
  } else if (name == "small_task") {
    cfg.dim = 32;
    cfg.tasks = 5;
    cfg.classes_per_task = 4;
    cfg.train_per_class = 8;
    cfg.test_per_class = 40;
    cfg.drift_kind = DriftKind::WeakNonlinear;
    cfg.drift_magnitude = 1.0;
    cfg.aux_pool_size = 2048;
  } else {
    throw Error(ErrorKind::Config, fmt::format("unknown simulator preset '{}'", name));
  }
  return cfg;
}

DriftOperator DriftOperator::identity(Eigen::Index d) {
  DriftOperator op;
  op.rotation = Matrix::Identity(d, d);
  op.bias = Vector::Zero(d);
  op.mix = Matrix::Zero(d, d);
  return op;
}

// Defined on directions and extended to be positively homogeneous, so data on
// the unit sphere map exactly and off-sphere Monte Carlo draws keep their norm.
Matrix DriftOperator::apply(const Matrix& x) const {
  if (is_linear() && rotation.isIdentity(0.0)) return x;
  const Vector norms = x.rowwise().norm();
  Matrix unit = x;
  kernels::normalize_rows(unit);
  Matrix out = unit * rotation.transpose();
  out.rowwise() += bias.transpose();
  if (eps > 0.0) out += eps * (unit * mix.transpose()).array().tanh().matrix();
  kernels::normalize_rows(out);
  out.array().colwise() *= norms.array();
  return out;
}

SimStream gen_stream(const SimConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = cfg.dim;
  const int num_classes = cfg.tasks * cfg.classes_per_task;
  Rng rng = make_rng(cfg.seed);
  std::normal_distribution<double> normal;
  const double radius = cfg.class_separation * std::sqrt(static_cast<double>(d));

  Matrix means(num_classes, d);
  for (int c = 0; c < num_classes; ++c) means.row(c) = radius * unit_vector(d, rng).transpose();

  auto draw_pool = [&](int per_class) {
    Matrix values(static_cast<Eigen::Index>(num_classes) * per_class, d);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(values.rows()));
    for (int c = 0; c < num_classes; ++c) {
      for (int i = 0; i < per_class; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(c) * per_class + i;
        for (Eigen::Index k = 0; k < d; ++k) values(r, k) = means(c, k) + normal(rng);
        labels[static_cast<std::size_t>(r)] = c;
      }
    }
    kernels::normalize_rows(values);
    return std::pair{std::move(values), std::move(labels)};
  };
  auto [train, train_labels] = draw_pool(cfg.train_per_class);
  auto [test, test_labels] = draw_pool(cfg.test_per_class);

  // Label-free auxiliary pool: each sample comes from its own random source mean.
  // Separate generator, so the pool size leaves the rest of the stream alone and
  // a smaller pool is a prefix of a larger one.
  Rng aux_rng = make_rng(cfg.seed ^ kAuxSalt);
  std::normal_distribution<double> aux_normal;
  Matrix aux(cfg.aux_pool_size, d);
  for (Eigen::Index i = 0; i < aux.rows(); ++i) {
    const Vector m = radius * unit_vector(d, aux_rng);
    for (Eigen::Index k = 0; k < d; ++k) aux(i, k) = m[k] + aux_normal(aux_rng);
  }
  kernels::normalize_rows(aux);
  const std::vector<std::int32_t> aux_labels(static_cast<std::size_t>(aux.rows()), 0);

  auto rows_for = [](const std::vector<std::int32_t>& labels, int lo, int hi) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= lo && labels[i] < hi) rows.push_back(static_cast<Eigen::Index>(i));
    return rows;
  };

  SimStream stream;
  for (int t = 1; t <= cfg.tasks; ++t) {
    const auto task_id = static_cast<std::uint32_t>(t);
    DriftOperator truth = (t == 1) ? DriftOperator::identity(d) : draw_drift(cfg, rng);

    const int lo = (t - 1) * cfg.classes_per_task, hi = t * cfg.classes_per_task;
    const auto new_rows = rows_for(train_labels, lo, hi);
    TaskRecord rec;
    rec.task_id = task_id;
    for (int c = lo; c < hi; ++c) rec.new_classes.push_back(c);
    rec.train_prev = select(train, train_labels, new_rows, task_id, fmt::format("F{}", t - 1));
    Matrix aux_before = aux;

    if (t > 1) {
      train = truth.apply(train);
      test = truth.apply(test);
      if (aux.rows() > 0) aux = truth.apply(aux);
    }
    rec.train_curr = select(train, train_labels, new_rows, task_id, fmt::format("F{}", t));
    rec.test = select(test, test_labels, rows_for(test_labels, 0, hi), task_id, fmt::format("F{}", t));
    rec.aux_prev = FeatureMatrix(std::move(aux_before), aux_labels, task_id, "aux_prev");
    rec.aux_curr = FeatureMatrix(aux, aux_labels, task_id, "aux_curr");
    rec.truth = std::move(truth);
    stream.tasks.push_back(std::move(rec));
  }
  stream.final_train = FeatureMatrix(std::move(train), std::move(train_labels),
                                     static_cast<std::uint32_t>(cfg.tasks), "final_train");
  return stream;
}

GaussianBank oracle_compensate(const TaskRecord& record, const GaussianBank& bank,
                               int mc_per_dim, std::uint64_t seed) {
  if (!record.truth) throw Error(ErrorKind::Config, "oracle compensation needs a ground-truth operator");
  const DriftOperator& truth = *record.truth;
  GaussianBank out;
  if (bank.empty()) return out;
  const auto ids = bank.class_ids();
  std::vector<ClassGaussian> moved(ids.size());
  const Eigen::Index n_samples = static_cast<Eigen::Index>(mc_per_dim) * bank.dim();
  const FeatureTransform transform = [&truth](const Matrix& x) { return truth.apply(x); };
  const auto count = static_cast<std::int64_t>(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& g = bank.at(ids[static_cast<std::size_t>(i)]);
    moved[static_cast<std::size_t>(i)] =
        truth.is_linear()
            ? linear_pushforward(g, truth.rotation)
            : mc_compensate(transform, g, n_samples, sub_seed(seed, record.task_id, static_cast<std::uint64_t>(g.class_id)));
  }
  for (auto& g : moved) out.insert(std::move(g));
  return out;
}

std::filesystem::path export_stream(const SimStream& stream, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.dim = static_cast<int>(stream.dim());
  for (const auto& rec : stream.tasks) {
    ManifestTask t;
    t.name = fmt::format("task{:02}", rec.task_id);
    auto dump = [&](const FeatureMatrix& fm, const std::string& view) {
      const std::string file = fmt::format("{}_{}.ftd", t.name, view);
      write_dump(fm, dir / file);
      return std::filesystem::path(file);
    };
    t.train_prev = dump(rec.train_prev, "train_prev");
    t.train_curr = dump(rec.train_curr, "train_curr");
    t.test = dump(rec.test, "test");
    if (rec.aux_prev.size() > 0) {
      t.aux_prev = dump(rec.aux_prev, "aux_prev");
      t.aux_curr = dump(rec.aux_curr, "aux_curr");
    }
    m.tasks.push_back(std::move(t));
  }
  write_dump(stream.final_train, dir / "final_train.ftd");
  m.final_train = "final_train.ftd";
  const auto path = dir / "manifest.ini";
  write_manifest(m, path);
  return path;
}

}  // namespace sldc
