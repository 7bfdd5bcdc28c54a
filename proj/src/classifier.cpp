#include "sldc/classifier.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/error.hpp"
#include "sldc/kernels.hpp"
#include "sldc/log.hpp"

namespace sldc {

namespace {

void check_lr(int steps, int batch, double lr_start, double lr_end, const char* what) {
  if (steps < 1 || batch < 1)
    throw Error(ErrorKind::Config, fmt::format("{}: steps and batch_size must be positive", what));
  if (!(lr_end > 0.0) || !(lr_start >= lr_end))
    throw Error(ErrorKind::Config, fmt::format("{}: need lr_start >= lr_end > 0", what));
}

double decayed(double start, double end, int step, int steps) {
  if (steps <= 1) return start;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(steps - 1);
}

// Row-wise softmax in place, max-subtracted.
void softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

// One cross-entropy gradient step on the rows listed in `rows`.
void ce_step(LinearClassifier& clf, std::span<const Eigen::Index> rows, const Matrix& x,
             std::span<const Eigen::Index> targets, double lr) {
  const auto k = static_cast<Eigen::Index>(rows.size());
  Matrix w(k, clf.dim());
  Vector b(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    w.row(j) = clf.weight.row(rows[static_cast<std::size_t>(j)]);
    b[j] = clf.bias[rows[static_cast<std::size_t>(j)]];
  }
  Matrix probs = x * w.transpose();
  probs.rowwise() += b.transpose();
  softmax_rows(probs);
  for (Eigen::Index i = 0; i < x.rows(); ++i) probs(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
  probs /= static_cast<double>(x.rows());
  const Matrix grad_w = probs.transpose() * x;
  const Vector grad_b = probs.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < k; ++j) {
    clf.weight.row(rows[static_cast<std::size_t>(j)]) -= lr * grad_w.row(j);
    clf.bias[rows[static_cast<std::size_t>(j)]] -= lr * grad_b[j];
  }
}

}  // namespace

Eigen::Index LinearClassifier::row_of(std::int32_t class_id) const {
  auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end())
    throw Error(ErrorKind::Coverage, fmt::format("class {} not in classifier", class_id));
  return static_cast<Eigen::Index>(it - class_ids.begin());
}

void CeConfig::validate() const { check_lr(steps, batch_size, lr_start, lr_end, "train_ce"); }
void RefineConfig::validate() const { check_lr(steps, batch_size, lr_start, lr_end, "refine"); }

LinearClassifier expand(const LinearClassifier& clf, std::span<const std::int32_t> new_class_ids) {
  std::vector<std::int32_t> ids = clf.class_ids;
  for (auto id : new_class_ids) {
    if (std::find(ids.begin(), ids.end(), id) != ids.end())
      throw Error(ErrorKind::Conflict, fmt::format("class {} already in classifier", id));
    ids.push_back(id);
  }
  const auto k_old = clf.num_classes();
  const auto k_new = static_cast<Eigen::Index>(ids.size());
  LinearClassifier out(clf.dim());
  out.weight = Matrix::Zero(k_new, clf.dim());
  out.bias = Vector::Zero(k_new);
  out.weight.topRows(k_old) = clf.weight;
  out.bias.head(k_old) = clf.bias;
  out.class_ids = std::move(ids);
  return out;
}

Vector softmax_probs(const LinearClassifier& clf, const Vector& f,
                     std::span<const std::int32_t> subset) {
  if (f.size() != clf.dim())
    throw Error(ErrorKind::Shape, fmt::format("classifier d={} vs feature d={}", clf.dim(), f.size()));
  Matrix logits(1, static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const auto r = clf.row_of(subset[j]);
    logits(0, static_cast<Eigen::Index>(j)) = clf.weight.row(r).dot(f) + clf.bias[r];
  }
  softmax_rows(logits);
  return logits.row(0).transpose();
}

LinearClassifier train_ce(LinearClassifier clf, const FeatureMatrix& feats,
                          std::span<const std::int32_t> subset, const CeConfig& cfg) {
  cfg.validate();
  if (feats.dim() != clf.dim())
    throw Error(ErrorKind::Shape, fmt::format("classifier d={} vs features d={}", clf.dim(), feats.dim()));
  std::vector<Eigen::Index> rows;
  std::unordered_map<std::int32_t, Eigen::Index> local;
  for (auto id : subset) {
    local.emplace(id, static_cast<Eigen::Index>(rows.size()));
    rows.push_back(clf.row_of(id));
  }
  std::vector<Eigen::Index> targets(feats.labels().size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto it = local.find(feats.labels()[i]);
    if (it == local.end())
      throw Error(ErrorKind::Coverage, fmt::format("label {} outside training subset", feats.labels()[i]));
    targets[i] = it->second;
  }
  if (feats.size() == 0 || rows.size() < 2) return clf;  // single class: zero gradient

  Rng rng = make_rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, feats.size() - 1);
  Matrix x(cfg.batch_size, clf.dim());
  std::vector<Eigen::Index> batch_targets(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index i = 0; i < cfg.batch_size; ++i) {
      const auto j = pick(rng);
      x.row(i) = feats.values().row(j);
      batch_targets[static_cast<std::size_t>(i)] = targets[static_cast<std::size_t>(j)];
    }
    ce_step(clf, rows, x, batch_targets, decayed(cfg.lr_start, cfg.lr_end, step, cfg.steps));
  }
  return clf;
}

LinearClassifier refine(LinearClassifier clf, const GaussianBank& bank, const RefineConfig& cfg) {
  cfg.validate();
  const auto k = clf.num_classes();
  if (k == 0) return clf;
  std::vector<GaussianSampler> samplers;
  samplers.reserve(static_cast<std::size_t>(k));
  for (auto id : clf.class_ids) {
    const auto& g = bank.at(id);
    if (g.dim() != clf.dim())
      throw Error(ErrorKind::Shape, fmt::format("bank d={} vs classifier d={}", g.dim(), clf.dim()));
    samplers.emplace_back(g);
  }
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) rows[static_cast<std::size_t>(j)] = j;

  Rng rng = make_rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, k - 1);
  Matrix x(cfg.batch_size, clf.dim());
  Vector scratch(clf.dim()), draw(clf.dim());
  std::vector<Eigen::Index> targets(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index i = 0; i < cfg.batch_size; ++i) {
      const auto c = pick(rng);
      samplers[static_cast<std::size_t>(c)].draw_into(draw, scratch, rng);
      x.row(i) = draw.transpose();
      targets[static_cast<std::size_t>(i)] = c;
    }
    ce_step(clf, rows, x, targets, decayed(cfg.lr_start, cfg.lr_end, step, cfg.steps));
  }
  return clf;
}

std::vector<std::int32_t> predict(const LinearClassifier& clf, const Matrix& x) {
  if (x.cols() != clf.dim())
    throw Error(ErrorKind::Shape, fmt::format("classifier d={} vs features d={}", clf.dim(), x.cols()));
  return kernels::predict(clf.weight, clf.bias, clf.class_ids, x);
}

double evaluate(const LinearClassifier& clf, const FeatureMatrix& feats) {
  if (feats.size() == 0) {
    log::warn("evaluate: empty test set, accuracy reported as 0");
    return 0.0;
  }
  const auto predicted = predict(clf, feats.values());
  const auto hits = kernels::count_equal(predicted, feats.labels());
  return static_cast<double>(hits) / static_cast<double>(feats.size());
}

void write_classifier(const LinearClassifier& clf, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("LCLF");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(clf.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(clf.num_classes()));
  for (auto id : clf.class_ids) w.put<std::int32_t>(id);
  for (Eigen::Index j = 0; j < clf.num_classes(); ++j) w.put<double>(clf.bias[j]);
  for (Eigen::Index j = 0; j < clf.num_classes(); ++j)
    for (Eigen::Index c = 0; c < clf.dim(); ++c) w.put<double>(clf.weight(j, c));
  io::write_file(path, w.bytes());
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  r.expect_magic("LCLF");
  const auto d = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  const auto k = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  r.require(static_cast<std::size_t>(4 * k + 8 * k + 8 * k * d));
  LinearClassifier clf(d);
  clf.class_ids.resize(static_cast<std::size_t>(k));
  for (auto& id : clf.class_ids) id = r.get<std::int32_t>();
  clf.bias.resize(k);
  clf.weight.resize(k, d);
  for (Eigen::Index j = 0; j < k; ++j) clf.bias[j] = r.get<double>();
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index c = 0; c < d; ++c) clf.weight(j, c) = r.get<double>();
  if (!clf.weight.allFinite() || !clf.bias.allFinite())
    throw Error(ErrorKind::Corruption, fmt::format("{}: non-finite classifier parameters", path.string()));
  return clf;
}

}  // namespace sldc
