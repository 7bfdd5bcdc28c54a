#include "sldc/weaknl_operator.hpp"

#include <cmath>
#include <random>

#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/error.hpp"

namespace sldc {

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Copies between parameter tensors and one flat vector, in a fixed order.
class Flattener {
 public:
  explicit Flattener(Vector& flat) : flat_(flat) {}

  template <typename Derived>
  void write(const Eigen::MatrixBase<Derived>& m) {
    flat_.segment(pos_, m.size()) = Eigen::Map<const Vector>(m.derived().data(), m.size());
    pos_ += m.size();
  }
  template <typename Derived>
  void read(Eigen::MatrixBase<Derived>& m) {
    Eigen::Map<Vector>(m.derived().data(), m.size()) = flat_.segment(pos_, m.size());
    pos_ += m.size();
  }
  Eigen::Index position() const { return pos_; }

 private:
  Vector& flat_;
  Eigen::Index pos_ = 0;
};

Eigen::Index mlp_size(const Mlp& p) {
  return p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size();
}

void pack_mlp(Flattener& f, const Mlp& p) {
  f.write(p.w1);
  f.write(p.b1);
  f.write(p.w2);
  f.write(p.b2);
}

void unpack_mlp(Flattener& f, Mlp& p) {
  f.read(p.w1);
  f.read(p.b1);
  f.read(p.w2);
  f.read(p.b2);
}

// Flat layout for the weak-nonlinear operator: psi first, then A, then logits.
Vector pack(const Mlp& psi, const Matrix* a, const std::array<double, 2>* logits) {
  Vector flat(mlp_size(psi) + (a ? a->size() : 0) + (logits ? 2 : 0));
  Flattener f(flat);
  pack_mlp(f, psi);
  if (a) f.write(*a);
  if (logits) f.write(Eigen::Vector2d((*logits)[0], (*logits)[1]));
  return flat;
}

void unpack(Vector& flat, Mlp& psi, Matrix* a, std::array<double, 2>* logits) {
  Flattener f(flat);
  unpack_mlp(f, psi);
  if (a) f.read(*a);
  if (logits) {
    Eigen::Vector2d l;
    f.read(l);
    (*logits)[0] = l[0];
    (*logits)[1] = l[1];
  }
}

class Adam {
 public:
  explicit Adam(Eigen::Index size) : m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

  // Decoupled weight decay applies to the first `decay_count` entries.
  void step(Vector& theta, const Vector& grad, double lr, double weight_decay,
            Eigen::Index decay_count) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    if (weight_decay > 0.0) theta.head(decay_count) *= (1.0 - lr * weight_decay);
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  Vector m_, v_;
  int t_ = 0;
};

void check_pairs(const FeatureMatrix& prev, const FeatureMatrix& curr, Eigen::Index d) {
  if (prev.size() != curr.size() || prev.dim() != curr.dim())
    throw Error(ErrorKind::Shape, fmt::format("training pairs {}x{} vs {}x{}", prev.size(),
                                              prev.dim(), curr.size(), curr.dim()));
  if (prev.dim() != d)
    throw Error(ErrorKind::Shape, fmt::format("operator d={} vs features d={}", d, prev.dim()));
  if (prev.size() == 0) throw Error(ErrorKind::EmptyInput, "no training pairs");
}

double learning_rate(const OperatorTrainConfig& cfg, int step) {
  if (cfg.steps <= 1) return cfg.lr_start;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

// Gathers a batch drawn with replacement.
void draw_batch(const Matrix& x, const Matrix& y, Rng& rng, Matrix& bx, Matrix& by) {
  std::uniform_int_distribution<Eigen::Index> pick(0, x.rows() - 1);
  for (Eigen::Index i = 0; i < bx.rows(); ++i) {
    const Eigen::Index j = pick(rng);
    bx.row(i) = x.row(j);
    by.row(i) = y.row(j);
  }
}

// Back-propagates dL/dpsi(x) through the MLP.
Mlp mlp_backward(const Mlp& psi, const Matrix& x, const Matrix& pre, const Matrix& hidden,
                 const Matrix& upstream) {
  Mlp g;
  g.w2 = upstream.transpose() * hidden;
  g.b2 = upstream.colwise().sum().transpose();
  Matrix dh = upstream * psi.w2;
  dh = dh.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  g.w1 = dh.transpose() * x;
  g.b1 = dh.colwise().sum().transpose();
  return g;
}

}  // namespace

Mlp Mlp::init(Eigen::Index d, Eigen::Index h, Rng& rng) {
  Mlp p;
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
  std::uniform_real_distribution<double> u1(-bound1, bound1), u2(-bound2, bound2);
  p.w1.resize(h, d);
  p.w2.resize(d, h);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = u1(rng);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = u2(rng);
  p.b1 = Vector::Zero(h);
  p.b2 = Vector::Zero(d);
  return p;
}

Matrix Mlp::forward(const Matrix& x) const {
  Matrix pre = x * w1.transpose();
  pre.rowwise() += b1.transpose();
  Matrix out = relu(pre) * w2.transpose();
  out.rowwise() += b2.transpose();
  return out;
}

std::array<double, 2> WeakNonlinearOperator::coefficients() const {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

void OperatorTrainConfig::validate() const {
  if (steps < 1 || batch_size < 1)
    throw Error(ErrorKind::Config, "operator training needs steps >= 1 and batch_size >= 1");
  if (!(lr_end > 0.0) || !(lr_start >= lr_end))
    throw Error(ErrorKind::Config, "operator training needs lr_start >= lr_end > 0");
  if (weight_decay < 0.0) throw Error(ErrorKind::Config, "weight decay must be non-negative");
}

WeakNonlinearOperator init_weaknl(Eigen::Index d, Eigen::Index hidden, std::uint64_t seed,
                                  double gamma2) {
  if (d < 1 || hidden < 1) throw Error(ErrorKind::Config, "operator dims must be positive");
  Rng rng = make_rng(seed);
  WeakNonlinearOperator op;
  op.a = Matrix::Identity(d, d);
  op.psi = Mlp::init(d, hidden, rng);
  op.logits = {std::log(0.9), std::log(0.1)};
  op.gamma2 = gamma2;
  return op;
}

Matrix forward(const WeakNonlinearOperator& op, const Matrix& x) {
  if (x.cols() != op.dim())
    throw Error(ErrorKind::Shape, fmt::format("forward: operator d={} vs input d={}", op.dim(), x.cols()));
  const auto [c1, c2] = op.coefficients();
  Matrix out = c1 * (x * op.a.transpose());
  out += c2 * op.psi.forward(x);
  return out;
}

Vector forward(const WeakNonlinearOperator& op, const Vector& f) {
  return forward(op, Matrix(f.transpose())).row(0).transpose();
}

WeakGradient weaknl_objective(const WeakNonlinearOperator& op, const Matrix& x, const Matrix& y) {
  const auto [c1, c2] = op.coefficients();
  const double scale = 1.0 / static_cast<double>(x.rows() * x.cols());

  const Matrix linear = x * op.a.transpose();
  Matrix pre = x * op.psi.w1.transpose();
  pre.rowwise() += op.psi.b1.transpose();
  const Matrix hidden = relu(pre);
  Matrix nonlinear = hidden * op.psi.w2.transpose();
  nonlinear.rowwise() += op.psi.b2.transpose();

  const Matrix residual = c1 * linear + c2 * nonlinear - y;
  WeakGradient g;
  g.loss = scale * residual.squaredNorm() + op.gamma2 * (c1 - 1.0) * (c1 - 1.0);

  const Matrix upstream = (2.0 * scale) * residual;  // dL/dT
  g.a = c1 * (upstream.transpose() * x);
  g.psi = mlp_backward(op.psi, x, pre, hidden, c2 * upstream);

  const double dc1 = upstream.cwiseProduct(linear).sum() + 2.0 * op.gamma2 * (c1 - 1.0);
  const double dc2 = upstream.cwiseProduct(nonlinear).sum();
  // Softmax Jacobian: dc_i/dl_j = c_i (δ_ij − c_j).
  g.logits[0] = dc1 * c1 * (1.0 - c1) - dc2 * c2 * c1;
  g.logits[1] = -dc1 * c1 * c2 + dc2 * c2 * (1.0 - c2);
  return g;
}

MlpGradient mlp_objective(const Mlp& psi, const Matrix& x, const Matrix& y) {
  const double scale = 1.0 / static_cast<double>(x.rows() * x.cols());
  Matrix pre = x * psi.w1.transpose();
  pre.rowwise() += psi.b1.transpose();
  const Matrix hidden = relu(pre);
  Matrix out = hidden * psi.w2.transpose();
  out.rowwise() += psi.b2.transpose();
  const Matrix residual = out - y;
  MlpGradient g;
  g.loss = scale * residual.squaredNorm();
  g.psi = mlp_backward(psi, x, pre, hidden, (2.0 * scale) * residual);
  return g;
}

WeakNonlinearOperator train_weaknl(WeakNonlinearOperator op, const FeatureMatrix& x_prev,
                                   const FeatureMatrix& x_curr, const OperatorTrainConfig& cfg) {
  cfg.validate();
  check_pairs(x_prev, x_curr, op.dim());
  const Matrix& x = x_prev.values();
  const Matrix& y = x_curr.values();
  const Eigen::Index psi_count = mlp_size(op.psi);

  Rng rng = make_rng(cfg.seed);
  Vector theta = pack(op.psi, &op.a, &op.logits);
  Adam adam(theta.size());
  Matrix bx(cfg.batch_size, x.cols()), by(cfg.batch_size, x.cols());
  op.train_log.clear();
  op.train_log.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    draw_batch(x, y, rng, bx, by);
    const WeakGradient g = weaknl_objective(op, bx, by);
    if (!std::isfinite(g.loss))
      throw Error(ErrorKind::Numerical, fmt::format("weak-nonlinear training diverged at step {}", step));
    op.train_log.push_back(g.loss);
    const Vector grad = pack(g.psi, &g.a, &g.logits);
    adam.step(theta, grad, learning_rate(cfg, step), cfg.weight_decay, psi_count);
    unpack(theta, op.psi, &op.a, &op.logits);
  }
  if (!theta.allFinite())
    throw Error(ErrorKind::Numerical, "weak-nonlinear training produced non-finite parameters");
  op.final_mse = (forward(op, x) - y).squaredNorm() / static_cast<double>(y.size());
  return op;
}

MlpTrainResult train_mlpdc(const FeatureMatrix& x_prev, const FeatureMatrix& x_curr,
                           Eigen::Index hidden, const OperatorTrainConfig& cfg) {
  cfg.validate();
  check_pairs(x_prev, x_curr, x_prev.dim());
  if (hidden < 1) throw Error(ErrorKind::Config, "hidden width must be positive");
  const Matrix& x = x_prev.values();
  const Matrix& y = x_curr.values();

  Rng rng = make_rng(cfg.seed);
  MlpTrainResult result;
  result.psi = Mlp::init(x.cols(), hidden, rng);
  result.initial_mse = (result.psi.forward(x) - y).squaredNorm() / static_cast<double>(y.size());

  Vector theta = pack(result.psi, nullptr, nullptr);
  Adam adam(theta.size());
  Matrix bx(cfg.batch_size, x.cols()), by(cfg.batch_size, x.cols());
  result.train_log.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    draw_batch(x, y, rng, bx, by);
    const MlpGradient g = mlp_objective(result.psi, bx, by);
    if (!std::isfinite(g.loss))
      throw Error(ErrorKind::Numerical, fmt::format("MLP training diverged at step {}", step));
    result.train_log.push_back(g.loss);
    const Vector grad = pack(g.psi, nullptr, nullptr);
    adam.step(theta, grad, learning_rate(cfg, step), cfg.weight_decay, theta.size());
    unpack(theta, result.psi, nullptr, nullptr);
  }
  if (!theta.allFinite()) throw Error(ErrorKind::Numerical, "MLP training produced non-finite parameters");
  result.final_mse = (result.psi.forward(x) - y).squaredNorm() / static_cast<double>(y.size());
  return result;
}

ClassGaussian mc_compensate(const FeatureTransform& transform, const ClassGaussian& g,
                            Eigen::Index n_samples, std::uint64_t seed) {
  if (n_samples < g.dim() + 1) {
    throw Error(ErrorKind::Config, fmt::format("Monte Carlo compensation needs at least d+1={} "
                                               "samples, got {}", g.dim() + 1, n_samples));
  }
  GaussianSampler sampler(g);
  Rng rng = make_rng(seed);
  const Matrix mapped = transform(sampler.draw(n_samples, rng));
  ClassGaussian out = estimate_gaussian(mapped, g.class_id);
  out.n_source = g.n_source;
  return out;
}

ClassGaussian mc_compensate(const WeakNonlinearOperator& op, const ClassGaussian& g,
                            Eigen::Index n_samples, std::uint64_t seed) {
  return mc_compensate([&op](const Matrix& x) { return forward(op, x); }, g, n_samples, seed);
}

ClassGaussian mc_compensate(const Mlp& psi, const ClassGaussian& g, Eigen::Index n_samples,
                            std::uint64_t seed) {
  return mc_compensate([&psi](const Matrix& x) { return psi.forward(x); }, g, n_samples, seed);
}

namespace {

void put_row_major(io::ByteWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.put<double>(m(r, c));
}

void get_row_major(io::ByteReader& r, Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = r.get<double>();
}

}  // namespace

void write_operator(const WeakNonlinearOperator& op, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("WNL1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(op.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(op.psi.hidden()));
  w.put<double>(op.gamma2);
  const auto [c1, c2] = op.coefficients();
  w.put<double>(c1);
  w.put<double>(c2);
  put_row_major(w, op.a);
  put_row_major(w, op.psi.w1);
  put_row_major(w, op.psi.b1);
  put_row_major(w, op.psi.w2);
  put_row_major(w, op.psi.b2);
  io::write_file(path, w.bytes());
}

WeakNonlinearOperator load_weak_operator(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  r.expect_magic("WNL1");
  const auto d = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  const auto h = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  WeakNonlinearOperator op;
  op.gamma2 = r.get<double>();
  const double c1 = r.get<double>();
  const double c2 = r.get<double>();
  if (!(c1 >= 0.0 && c2 >= 0.0 && std::abs(c1 + c2 - 1.0) < 1e-9))
    throw Error(ErrorKind::Corruption, fmt::format("{}: coefficients ({}, {}) off the simplex", path.string(), c1, c2));
  // Zero coefficients map to a large negative logit rather than -inf.
  op.logits = {std::log(std::max(c1, 1e-300)), std::log(std::max(c2, 1e-300))};
  r.require(static_cast<std::size_t>(8 * (d * d + 2 * h * d + h + d)));
  op.a.resize(d, d);
  op.psi.w1.resize(h, d);
  op.psi.b1.resize(h);
  op.psi.w2.resize(d, h);
  op.psi.b2.resize(d);
  get_row_major(r, op.a);
  get_row_major(r, op.psi.w1);
  Matrix b1(h, 1), b2(d, 1);
  get_row_major(r, b1);
  get_row_major(r, op.psi.w2);
  get_row_major(r, b2);
  op.psi.b1 = b1.col(0);
  op.psi.b2 = b2.col(0);
  return op;
}

}  // namespace sldc
