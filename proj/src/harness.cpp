#include "sldc/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "sldc/error.hpp"
#include "sldc/gaussian_stats.hpp"
#include "sldc/linear_operator.hpp"
#include "sldc/log.hpp"
#include "sldc/manifest.hpp"

namespace sldc {

namespace {

// Sub-seed salts so each consumer of randomness in a task draws its own stream.
constexpr std::uint64_t kSaltCe = 0xCE00000000ull;
constexpr std::uint64_t kSaltRefine = 0x5EF0000000ull;
constexpr std::uint64_t kSaltOperator = 0x0E70000000ull;
constexpr std::uint64_t kSaltMonteCarlo = 0x3C00000000ull;

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

FeatureMatrix first_rows(const FeatureMatrix& m, Eigen::Index count) {
  if (count >= m.size()) return m;
  std::vector<std::int32_t> labels(m.labels().begin(), m.labels().begin() + count);
  return FeatureMatrix(m.values().topRows(count), std::move(labels), m.task_id(), m.model_tag());
}

// Applies `fn` to every Gaussian in the bank, one class per iteration.
template <typename Fn>
GaussianBank map_bank(const GaussianBank& bank, Fn fn) {
  const auto ids = bank.class_ids();
  std::vector<ClassGaussian> moved(ids.size());
  const auto count = static_cast<std::int64_t>(ids.size());
  // Exceptions must not escape the parallel region; keep the first one.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      moved[static_cast<std::size_t>(i)] = fn(bank.at(ids[static_cast<std::size_t>(i)]));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  GaussianBank out;
  for (auto& g : moved) out.insert(std::move(g));
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::vector<double> RunReport::accuracies() const {
  std::vector<double> out;
  for (const auto& t : tasks) out.push_back(t.accuracy);
  return out;
}

double inc_accuracy(const std::vector<double>& accuracies) {
  if (accuracies.empty()) return 0.0;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  return sum / static_cast<double>(accuracies.size());
}

SimStream load_stream(const RunConfig& cfg) {
  if (cfg.sim) {
    SimConfig sim = *cfg.sim;
    sim.aux_pool_size = std::max(sim.aux_pool_size, cfg.ade);
    return gen_stream(sim);
  }
  const Manifest m = read_manifest(*cfg.manifest);
  SimStream stream;
  for (const auto& entry : m.tasks) {
    TaskRecord rec;
    rec.train_prev = load_dump(entry.train_prev);
    rec.train_curr = load_dump(entry.train_curr);
    rec.test = load_dump(entry.test);
    rec.task_id = rec.train_curr.task_id();
    if (rec.train_prev.size() != rec.train_curr.size() || rec.train_prev.labels() != rec.train_curr.labels())
      throw Error(ErrorKind::Corruption, fmt::format("task {}: train_prev/train_curr are not row-aligned", entry.name));
    for (const auto* fm : {&rec.train_prev, &rec.train_curr, &rec.test}) {
      if (fm->dim() != m.dim)
        throw Error(ErrorKind::Shape, fmt::format("task {}: dump d={} but manifest dim={}", entry.name, fm->dim(), m.dim));
    }
    rec.new_classes = rec.train_curr.distinct_labels();
    if (entry.aux_prev) {
      rec.aux_prev = load_dump(*entry.aux_prev);
      rec.aux_curr = load_dump(*entry.aux_curr);
    } else {
      rec.aux_prev = rec.aux_curr = FeatureMatrix::empty(m.dim);
    }
    stream.tasks.push_back(std::move(rec));
  }
  stream.final_train = m.final_train ? load_dump(*m.final_train) : FeatureMatrix::empty(m.dim);
  return stream;
}

RunReport run(const RunConfig& cfg) {
  cfg.validate();
  return run(cfg, load_stream(cfg));
}

RunReport run(const RunConfig& cfg, const SimStream& stream) {
  cfg.validate();
  if (stream.tasks.empty()) throw Error(ErrorKind::Config, "stream has no tasks");
  const Eigen::Index d = stream.tasks.front().train_curr.dim();
  const Eigen::Index hidden = cfg.hidden > 0 ? cfg.hidden : d;

  RunReport report;
  report.method = cfg.method;
  report.config = cfg.to_json();
  LinearClassifier clf(d);
  GaussianBank bank;
  Stopwatch clock;

  for (std::size_t index = 0; index < stream.tasks.size(); ++index) {
    const TaskRecord& rec = stream.tasks[index];
    const std::uint64_t tid = rec.task_id;
    TaskDiagnostics diag;
    diag.task_id = rec.task_id;
    try {
      const FeatureMatrix x_prev = l2_normalize(rec.train_prev);
      const FeatureMatrix x_curr = l2_normalize(rec.train_curr);
      const FeatureMatrix test = l2_normalize(rec.test);
      FeatureMatrix aux_prev = FeatureMatrix::empty(d), aux_curr = FeatureMatrix::empty(d);
      if (cfg.ade > 0) {
        if (rec.aux_prev.size() < cfg.ade)
          log::warn(fmt::format("task {}: only {} auxiliary pairs available, {} requested", tid,
                                rec.aux_prev.size(), cfg.ade));
        aux_prev = l2_normalize(first_rows(rec.aux_prev, cfg.ade));
        aux_curr = l2_normalize(first_rows(rec.aux_curr, cfg.ade));
      }
      report.times.ingest += clock.lap();

      clf = expand(clf, rec.new_classes);
      CeConfig ce = cfg.ce;
      ce.seed = sub_seed(cfg.seed ^ kSaltCe, tid, 0);
      clf = train_ce(std::move(clf), x_curr, rec.new_classes, ce);
      report.times.train_ce += clock.lap();

      if (index > 0 && cfg.method != Method::Baseline && !bank.empty()) {
        const std::uint64_t op_seed = sub_seed(cfg.seed ^ kSaltOperator, tid, 0);
        const std::uint64_t mc_seed = cfg.seed ^ kSaltMonteCarlo;
        const FeatureMatrix fit_prev = aux_prev.size() > 0 ? concat_rows(x_prev, aux_prev) : x_prev;
        const FeatureMatrix fit_curr = aux_curr.size() > 0 ? concat_rows(x_curr, aux_curr) : x_curr;
        diag.n_pairs = fit_prev.size();
        const Eigen::Index n_mc = static_cast<Eigen::Index>(cfg.mc_per_dim) * d;

        switch (cfg.method) {
          case Method::Alpha1: {
            LinearOperator op = fit_with_ade(x_prev, x_curr, aux_prev, aux_curr, cfg.ridge_gamma);
            op = reweight_identity(op, op.n_fit, cfg.alpha_temp, d);
            ++report.operator_fits;
            diag.residual_mse = op.residual_mse;
            diag.w_applied = op.w_applied;
            if (rec.truth && rec.truth->is_linear())
              diag.operator_rel_error = (op.a - rec.truth->rotation).norm() / rec.truth->rotation.norm();
            report.times.operator_fit += clock.lap();
            bank = map_bank(bank, [&](const ClassGaussian& g) { return pushforward(g, op); });
            break;
          }
          case Method::Alpha2: {
            OperatorTrainConfig train = cfg.weak_train;
            train.seed = op_seed;
            WeakNonlinearOperator op = init_weaknl(d, hidden, op_seed, cfg.weak_gamma);
            op = train_weaknl(std::move(op), fit_prev, fit_curr, train);
            ++report.operator_fits;
            diag.residual_mse = op.final_mse;
            diag.c1 = op.c1();
            report.times.operator_fit += clock.lap();
            bank = map_bank(bank, [&](const ClassGaussian& g) {
              return mc_compensate(op, g, n_mc, sub_seed(mc_seed, tid, static_cast<std::uint64_t>(g.class_id)));
            });
            break;
          }
          case Method::Mlpdc: {
            OperatorTrainConfig train = cfg.mlp_train;
            train.seed = op_seed;
            const MlpTrainResult fit = train_mlpdc(fit_prev, fit_curr, hidden, train);
            ++report.operator_fits;
            diag.residual_mse = fit.final_mse;
            report.times.operator_fit += clock.lap();
            bank = map_bank(bank, [&](const ClassGaussian& g) {
              return mc_compensate(fit.psi, g, n_mc, sub_seed(mc_seed, tid, static_cast<std::uint64_t>(g.class_id)));
            });
            break;
          }
          case Method::Oracle:
            bank = oracle_compensate(rec, bank, cfg.oracle_mc_per_dim, mc_seed);
            break;
          case Method::Baseline:
            break;
        }
        diag.compensated = static_cast<std::int64_t>(bank.size());
        report.gaussians_compensated += diag.compensated;
        report.times.compensate += clock.lap();
      }

      for (auto c : rec.new_classes) bank.insert(estimate_gaussian(x_curr, c));
      RefineConfig refine_cfg = cfg.refine;
      refine_cfg.seed = sub_seed(cfg.seed ^ kSaltRefine, tid, 0);
      clf = refine(std::move(clf), bank, refine_cfg);
      report.times.refine += clock.lap();

      diag.accuracy = evaluate(clf, test);
      report.times.evaluate += clock.lap();
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("task {}: {}", tid, e.what()));
    }
    report.tasks.push_back(diag);
  }

  const auto acc = report.accuracies();
  report.last_acc = acc.back();
  report.inc_acc = inc_accuracy(acc);
  if (cfg.joint_reference && stream.final_train.size() > 0)
    report.joint_acc = joint_reference_accuracy(stream, cfg.joint);
  return report;
}

double joint_reference_accuracy(const SimStream& stream, const CeConfig& cfg) {
  const FeatureMatrix train = l2_normalize(stream.final_train);
  const FeatureMatrix test = l2_normalize(stream.tasks.back().test);
  LinearClassifier clf(train.dim());
  const auto classes = train.distinct_labels();
  clf = expand(clf, classes);
  clf = train_ce(std::move(clf), train, classes, cfg);
  return evaluate(clf, test);
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["schema"] = "report_v1";
  j["method"] = to_string(method);
  j["last_acc"] = last_acc;
  j["inc_acc"] = inc_acc;
  j["joint_acc"] = optional_json(joint_acc);
  j["accuracies"] = accuracies();
  j["counters"] = {{"operator_fits", operator_fits}, {"gaussians_compensated", gaussians_compensated}};
  auto tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) {
    tasks_json.push_back({{"task_id", t.task_id},
                          {"accuracy", t.accuracy},
                          {"n_pairs", t.n_pairs},
                          {"residual_mse", optional_json(t.residual_mse)},
                          {"w_applied", optional_json(t.w_applied)},
                          {"c1", optional_json(t.c1)},
                          {"operator_rel_error", optional_json(t.operator_rel_error)},
                          {"compensated", t.compensated}});
  }
  j["tasks"] = std::move(tasks_json);
  j["config"] = config;
  return j;
}

std::string RunReport::to_text() const {
  auto opt = [](const std::optional<double>& v, const char* pattern) {
    return v ? fmt::format(fmt::runtime(pattern), *v) : std::string("-");
  };
  std::ostringstream out;
  out << fmt::format("method: {}\n", to_string(method));
  out << fmt::format("{:>5} {:>9} {:>8} {:>12} {:>9} {:>8} {:>10}\n", "task", "accuracy", "pairs",
                     "resid_mse", "w", "c1", "op_err");
  for (const auto& t : tasks) {
    out << fmt::format("{:>5} {:>9.4f} {:>8} {:>12} {:>9} {:>8} {:>10}\n", t.task_id, t.accuracy,
                       t.n_pairs, opt(t.residual_mse, "{:.4e}"), opt(t.w_applied, "{:.4f}"),
                       opt(t.c1, "{:.4f}"), opt(t.operator_rel_error, "{:.4f}"));
  }
  out << fmt::format("last_acc: {:.4f}\ninc_acc:  {:.4f}\n", last_acc, inc_acc);
  if (joint_acc) out << fmt::format("joint_acc: {:.4f}\n", *joint_acc);
  out << fmt::format("operator fits: {}, gaussians compensated: {}\n", operator_fits, gaussians_compensated);
  out << fmt::format("seconds: ingest {:.2f}, train_ce {:.2f}, operator {:.2f}, compensate {:.2f}, "
                     "refine {:.2f}, evaluate {:.2f}\n",
                     times.ingest, times.train_ce, times.operator_fit, times.compensate, times.refine,
                     times.evaluate);
  return out.str();
}

namespace {

// Everything that defines the stream, excluding the auxiliary pool size
// (enrichment draws from an independent generator).
bool same_input(const RunConfig& a, const RunConfig& b) {
  if (a.manifest || b.manifest) return a.manifest == b.manifest;
  SimConfig sa = *a.sim, sb = *b.sim;
  sa.aux_pool_size = sb.aux_pool_size = 0;
  return sa == sb;
}

}  // namespace

Comparison compare(const std::vector<RunConfig>& cfgs) {
  if (cfgs.empty()) throw Error(ErrorKind::Config, "compare needs at least one config");
  for (const auto& c : cfgs) {
    c.validate();
    if (!same_input(cfgs.front(), c)) throw Error(ErrorKind::Config, "compare: configs describe different streams");
  }
  RunConfig widest = cfgs.front();
  for (const auto& c : cfgs) widest.ade = std::max(widest.ade, c.ade);
  const SimStream stream = load_stream(widest);

  Comparison cmp;
  for (const auto& c : cfgs) {
    cmp.reports.push_back(run(c, stream));
    cmp.delta_last.push_back(cmp.reports.back().last_acc - cmp.reports.front().last_acc);
    cmp.delta_inc.push_back(cmp.reports.back().inc_acc - cmp.reports.front().inc_acc);
  }
  return cmp;
}

std::string Comparison::to_text() const {
  std::ostringstream out;
  out << fmt::format("{:<16} {:>9} {:>9} {:>10} {:>10}\n", "method", "last_acc", "inc_acc", "d_last", "d_inc");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::string label = to_string(r.method);
    const int ade = r.config["run"]["ade"].get<int>();
    if (ade > 0) label += fmt::format("+ade{}", ade);
    out << fmt::format("{:<16} {:>9.4f} {:>9.4f} {:>+10.4f} {:>+10.4f}\n", label, r.last_acc, r.inc_acc,
                       delta_last[i], delta_inc[i]);
  }
  return out.str();
}

nlohmann::json Comparison::to_json() const {
  nlohmann::json j;
  j["schema"] = "comparison_v1";
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    rows.push_back({{"report", reports[i].to_json()}, {"delta_last", delta_last[i]}, {"delta_inc", delta_inc[i]}});
  }
  j["runs"] = std::move(rows);
  return j;
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_text = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, fmt::format("{}: cannot open for writing", p.string()));
    out << text;
  };
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "report.txt", report.to_text());
  const nlohmann::json times = {{"ingest", report.times.ingest},     {"train_ce", report.times.train_ce},
                                {"operator_fit", report.times.operator_fit},
                                {"compensate", report.times.compensate},
                                {"refine", report.times.refine},     {"evaluate", report.times.evaluate}};
  write_text(dir / "timings.json", times.dump(2) + "\n");
}

}  // namespace sldc
