// Command-line front end: simulate, run, compare, inspect.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "sldc/binary_io.hpp"
#include "sldc/classifier.hpp"
#include "sldc/drift_sim.hpp"
#include "sldc/error.hpp"
#include "sldc/feature_store.hpp"
#include "sldc/gaussian_stats.hpp"
#include "sldc/harness.hpp"
#include "sldc/linear_operator.hpp"
#include "sldc/weaknl_operator.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct CommonFlags {
  std::string config;
  std::string method;
  int ade = -1;
  long long seed = -1;
  std::string out;
  bool json = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Config file ([section] key = value)");
  cmd->add_option("--method", f.method, "seqft_baseline | alpha1 | alpha2 | mlpdc | oracle");
  cmd->add_option("--ade", f.ade, "Auxiliary pairs per task (0 disables)");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_flag("--json", f.json, "Print the JSON document to stdout");
  cmd->add_option("--set", f.sets, "Override a config key: section.key=value");
}

Overrides collect_overrides(const CommonFlags& f) {
  Overrides o;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw sldc::Error(sldc::ErrorKind::Config, fmt::format("--set '{}' needs section.key=value", s));
    o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!f.method.empty()) o.emplace_back("run.method", f.method);
  if (f.ade >= 0) o.emplace_back("run.ade", std::to_string(f.ade));
  if (f.seed >= 0) o.emplace_back("run.seed", std::to_string(f.seed));
  if (!f.out.empty()) o.emplace_back("run.out", f.out);
  return o;
}

void inspect(const std::string& path) {
  const std::string magic = sldc::io::peek_magic(path);
  if (magic == "FTDK") {
    const auto h = sldc::read_dump_header(path);
    std::cout << fmt::format("FTD dump v{}: d={} n={} task_id={} model_tag=\"{}\"\n", h.version, h.dim,
                             h.count, h.task_id, h.model_tag);
  } else if (magic == "GBNK") {
    const auto bank = sldc::load_bank(path);
    std::cout << fmt::format("Gaussian bank: {} classes, d={}\n", bank.size(), bank.dim());
    for (const auto& [id, g] : bank)
      std::cout << fmt::format("  class {:>5}  n_source={:<8} trace={:.6g}\n", id, g.n_source, g.sigma.trace());
  } else if (magic == "LOP1") {
    const auto op = sldc::load_linear_operator(path);
    std::cout << fmt::format("linear operator: d={} gamma={:g} alpha_temp={:g} n_fit={} w_applied={:.6g}\n",
                             op.dim(), op.gamma, op.alpha_temp, op.n_fit, op.w_applied);
  } else if (magic == "WNL1") {
    const auto op = sldc::load_weak_operator(path);
    std::cout << fmt::format("weak-nonlinear operator: d={} h={} gamma2={:g} c1={:.6f} c2={:.6f}\n", op.dim(),
                             op.psi.hidden(), op.gamma2, op.c1(), op.c2());
  } else if (magic == "LCLF") {
    const auto clf = sldc::load_classifier(path);
    std::cout << fmt::format("linear classifier: d={} classes={}\n", clf.dim(), clf.num_classes());
  } else {
    throw sldc::Error(sldc::ErrorKind::Format, fmt::format("{}: unrecognized file magic", path));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-space drift compensation for exemplar-free class-incremental learning"};
  app.require_subcommand(1);

  CommonFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic stream as FTD dumps + manifest");
  add_common(simulate, sim_flags);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one method over a stream and write reports");
  add_common(run_cmd, run_flags);

  CommonFlags cmp_flags;
  std::vector<std::string> cmp_configs;
  std::vector<std::string> cmp_methods;
  auto* compare_cmd = app.add_subcommand("compare", "Run several methods on one stream");
  add_common(compare_cmd, cmp_flags);
  compare_cmd->add_option("--configs", cmp_configs, "Additional config files to compare");
  compare_cmd->add_option("--methods", cmp_methods, "Methods to run on the base config")->delimiter(',');

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the header of a dump/bank/operator/classifier file");
  inspect_cmd->add_option("path", inspect_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) {
      const auto cfg = sldc::parse_run_config(sim_flags.config, collect_overrides(sim_flags));
      if (!cfg.sim) throw sldc::Error(sldc::ErrorKind::Config, "simulate needs a simulator config");
      sldc::SimConfig sim = *cfg.sim;
      sim.aux_pool_size = std::max(sim.aux_pool_size, cfg.ade);
      const auto manifest = sldc::export_stream(sldc::gen_stream(sim), cfg.out);
      std::cout << "wrote " << manifest.string() << '\n';
    } else if (*run_cmd) {
      const auto cfg = sldc::parse_run_config(run_flags.config, collect_overrides(run_flags));
      const auto report = sldc::run(cfg);
      sldc::write_report(report, cfg.out);
      if (run_flags.json) {
        std::cout << report.to_json().dump(2) << '\n';
      } else {
        std::cout << report.to_text();
      }
    } else if (*compare_cmd) {
      const auto overrides = collect_overrides(cmp_flags);
      std::vector<sldc::RunConfig> cfgs;
      const auto base = sldc::parse_run_config(cmp_flags.config, overrides);
      if (cmp_methods.empty()) {
        cfgs.push_back(base);
      } else {
        for (const auto& m : cmp_methods) {
          auto o = overrides;
          o.emplace_back("run.method", m);
          cfgs.push_back(sldc::parse_run_config(cmp_flags.config, o));
        }
      }
      for (const auto& path : cmp_configs) cfgs.push_back(sldc::parse_run_config(path, overrides));
      const auto cmp = sldc::compare(cfgs);
      std::filesystem::create_directories(base.out);
      std::ofstream(base.out / "comparison.json") << cmp.to_json().dump(2) << '\n';
      std::ofstream(base.out / "comparison.txt") << cmp.to_text();
      if (cmp_flags.json) {
        std::cout << cmp.to_json().dump(2) << '\n';
      } else {
        std::cout << cmp.to_text();
      }
    } else if (*inspect_cmd) {
      inspect(inspect_path);
    }
  } catch (const sldc::Error& e) {
    std::cerr << "sldc: " << sldc::to_string(e.kind()) << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "sldc: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
