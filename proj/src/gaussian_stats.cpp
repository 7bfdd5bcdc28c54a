#include "sldc/gaussian_stats.hpp"

#include <cmath>
#include <random>

#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/error.hpp"
#include "sldc/kernels.hpp"

namespace sldc {

void GaussianBank::insert(ClassGaussian g) {
  if (!entries_.empty() && g.dim() != dim())
    throw Error(ErrorKind::Shape, fmt::format("bank has d={}, got d={}", dim(), g.dim()));
  const auto id = g.class_id;
  if (!entries_.emplace(id, std::move(g)).second)
    throw Error(ErrorKind::Conflict, fmt::format("class {} already in bank", id));
}

void GaussianBank::replace(ClassGaussian g) {
  auto it = entries_.find(g.class_id);
  if (it == entries_.end())
    throw Error(ErrorKind::Coverage, fmt::format("class {} not in bank", g.class_id));
  it->second = std::move(g);
}

const ClassGaussian& GaussianBank::at(std::int32_t class_id) const {
  auto it = entries_.find(class_id);
  if (it == entries_.end())
    throw Error(ErrorKind::Coverage, fmt::format("class {} not in bank", class_id));
  return it->second;
}

std::vector<std::int32_t> GaussianBank::class_ids() const {
  std::vector<std::int32_t> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, g] : entries_) ids.push_back(id);
  return ids;
}

ClassGaussian estimate_gaussian(const Matrix& samples, std::int32_t class_id) {
  if (samples.rows() == 0)
    throw Error(ErrorKind::EmptyInput, fmt::format("class {} has no samples", class_id));
  auto m = kernels::moments(samples);
  return {class_id, std::move(m.mean), std::move(m.cov),
          static_cast<std::uint64_t>(samples.rows())};
}

ClassGaussian estimate_gaussian(const FeatureMatrix& features, std::int32_t class_id) {
  return estimate_gaussian(features.rows_with_label(class_id), class_id);
}

ClassGaussian reestimate(const FeatureMatrix& samples, std::int32_t class_id) {
  return estimate_gaussian(samples, class_id);
}

ClassGaussian linear_pushforward(const ClassGaussian& g, const Matrix& a) {
  if (a.rows() != a.cols() || a.cols() != g.dim()) {
    throw Error(ErrorKind::Shape, fmt::format("operator {}x{} vs Gaussian d={}", a.rows(),
                                              a.cols(), g.dim()));
  }
  Matrix sigma = a * g.sigma * a.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return {g.class_id, a * g.mu, std::move(sigma), g.n_source};
}

GaussianSampler::GaussianSampler(const ClassGaussian& g) : mu_(g.mu) {
  const Eigen::Index d = g.dim();
  if (g.sigma.isZero(0.0)) {
    factor_ = Matrix::Zero(d, d);
    return;
  }
  Eigen::LLT<Matrix> llt(g.sigma);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  const double eps = 1e-6 * g.sigma.trace() / static_cast<double>(d);
  Eigen::LLT<Matrix> jittered(g.sigma + eps * Matrix::Identity(d, d));
  if (jittered.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g.sigma, Eigen::EigenvaluesOnly);
    throw Error(ErrorKind::Numerical,
                fmt::format("class {}: covariance not positive semidefinite (min eigenvalue {:.3e}, "
                            "jitter {:.3e})",
                            g.class_id, eig.eigenvalues().minCoeff(), eps));
  }
  factor_ = jittered.matrixL();
  jittered_ = true;
}

void GaussianSampler::draw_into(Eigen::Ref<Vector> out, Eigen::Ref<Vector> scratch,
                                Rng& rng) const {
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < scratch.size(); ++i) scratch[i] = normal(rng);
  out.noalias() = factor_.triangularView<Eigen::Lower>() * scratch;
  out += mu_;
}

Matrix GaussianSampler::draw(Eigen::Index count, Rng& rng) const {
  const Eigen::Index d = mu_.size();
  std::normal_distribution<double> normal;
  Matrix z(count, d);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index c = 0; c < d; ++c) z(i, c) = normal(rng);
  Matrix out = z * factor_.transpose();
  out.rowwise() += mu_.transpose();
  return out;
}

FeatureMatrix sample(const ClassGaussian& g, Eigen::Index count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::Config, "sample count must be at least 1");
  GaussianSampler sampler(g);
  Rng rng = make_rng(seed);
  return FeatureMatrix(sampler.draw(count, rng),
                       std::vector<std::int32_t>(static_cast<std::size_t>(count), g.class_id));
}

void write_bank(const GaussianBank& bank, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("GBNK");
  w.put<std::uint16_t>(kBankVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bank.size()));
  for (const auto& [id, g] : bank) {
    w.put<std::int32_t>(id);
    w.put<std::uint64_t>(g.n_source);
    for (Eigen::Index i = 0; i < g.dim(); ++i) w.put<double>(g.mu[i]);
    for (Eigen::Index r = 0; r < g.dim(); ++r)
      for (Eigen::Index c = 0; c < g.dim(); ++c) w.put<double>(g.sigma(r, c));
  }
  io::write_file(path, w.bytes());
}

GaussianBank load_bank(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  r.expect_magic("GBNK");
  const auto version = r.get<std::uint16_t>();
  if (version != kBankVersion)
    throw Error(ErrorKind::Format, fmt::format("{}: unsupported bank version {}", path.string(), version));
  const auto count = r.get<std::uint32_t>();
  GaussianBank bank;
  if (count == 0) return bank;

  // Per-class record is 12 + 8d + 8d² bytes; solve for d.
  const std::size_t per_class = r.remaining() / count;
  if (per_class * count != r.remaining() || per_class < 12 + 16)
    throw Error(ErrorKind::Corruption, fmt::format("{}: payload size {} not divisible into {} classes",
                                                   path.string(), r.remaining(), count));
  const double disc = 1.0 + 4.0 * static_cast<double>(per_class - 12) / 8.0;
  const auto d = static_cast<Eigen::Index>(std::llround((-1.0 + std::sqrt(disc)) / 2.0));
  if (d <= 0 || static_cast<std::size_t>(12 + 8 * d + 8 * d * d) != per_class)
    throw Error(ErrorKind::Corruption,
                fmt::format("{}: per-class record of {} bytes matches no dimension", path.string(), per_class));

  for (std::uint32_t k = 0; k < count; ++k) {
    ClassGaussian g;
    g.class_id = r.get<std::int32_t>();
    g.n_source = r.get<std::uint64_t>();
    g.mu.resize(d);
    g.sigma.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) g.mu[i] = r.get<double>();
    for (Eigen::Index rr = 0; rr < d; ++rr)
      for (Eigen::Index c = 0; c < d; ++c) g.sigma(rr, c) = r.get<double>();
    if (!g.mu.allFinite() || !g.sigma.allFinite())
      throw Error(ErrorKind::Corruption, fmt::format("{}: class {} has non-finite moments", path.string(), g.class_id));
    bank.insert(std::move(g));
  }
  return bank;
}

}  // namespace sldc
