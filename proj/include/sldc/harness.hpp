#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sldc/classifier.hpp"
#include "sldc/drift_sim.hpp"
#include "sldc/weaknl_operator.hpp"

namespace sldc {

enum class Method { Baseline, Alpha1, Alpha2, Mlpdc, Oracle };

Method parse_method(const std::string& name);
std::string to_string(Method method);

struct RunConfig {
  Method method = Method::Alpha1;
  int ade = 0;  // auxiliary pairs per task; 0 disables enrichment
  std::uint64_t seed = 0;
  bool joint_reference = false;

  double ridge_gamma = 1e-4;
  double alpha_temp = 1.0;

  double weak_gamma = 0.5;
  int hidden = 0;  // 0 means "same as the feature dimension"
  int mc_per_dim = 10;
  OperatorTrainConfig weak_train{};
  OperatorTrainConfig mlp_train{.weight_decay = 1e-6};
  int oracle_mc_per_dim = 1000;

  CeConfig ce{};
  RefineConfig refine{};
  CeConfig joint{.steps = 3000, .batch_size = 128, .lr_start = 32.0, .lr_end = 3.2};

  // Exactly one input: a simulated stream or a manifest of dumps.
  std::optional<SimConfig> sim;
  std::optional<std::filesystem::path> manifest;
  std::filesystem::path out = "sldc_out";

  void validate() const;
  nlohmann::json to_json() const;
};

// Parses the INI-style config ([section] headers, key = value lines), then
// applies "section.key=value" overrides in order. Unknown keys are config errors.
RunConfig parse_run_config(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});
RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::pair<std::string, std::string>>& overrides = {});

struct TaskDiagnostics {
  std::uint32_t task_id = 0;
  double accuracy = 0.0;
  std::int64_t n_pairs = 0;  // pairs used to fit the operator (task + auxiliary)
  std::optional<double> residual_mse;
  std::optional<double> w_applied;
  std::optional<double> c1;
  std::optional<double> operator_rel_error;  // ‖A − G‖_F / ‖G‖_F when the truth is linear
  std::int64_t compensated = 0;
};

struct PhaseTimes {
  double ingest = 0, train_ce = 0, operator_fit = 0, compensate = 0, refine = 0, evaluate = 0;
};

struct RunReport {
  Method method = Method::Alpha1;
  std::vector<TaskDiagnostics> tasks;
  double last_acc = 0.0;
  double inc_acc = 0.0;
  std::optional<double> joint_acc;
  std::int64_t operator_fits = 0;
  std::int64_t gaussians_compensated = 0;
  nlohmann::json config;
  PhaseTimes times;

  std::vector<double> accuracies() const;
  // Structured report ("report_v1"); excludes wall-clock times so repeated
  // runs produce identical bytes.
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Mean of the per-task accuracies, summed in task order.
double inc_accuracy(const std::vector<double>& accuracies);

// A stream ready for the task loop: simulated (with ground truth) or loaded from a manifest.
SimStream load_stream(const RunConfig& cfg);

RunReport run(const RunConfig& cfg);
RunReport run(const RunConfig& cfg, const SimStream& stream);

// Classifier trained on every task's final-space training features at once,
// evaluated on the final test set.
double joint_reference_accuracy(const SimStream& stream, const CeConfig& cfg);

struct Comparison {
  std::vector<RunReport> reports;
  std::vector<double> delta_last;  // vs the first report
  std::vector<double> delta_inc;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

// Runs every config on one shared stream. Throws Config if inputs differ.
Comparison compare(const std::vector<RunConfig>& cfgs);

// Writes report.json, report.txt and timings.json into cfg.out.
void write_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace sldc
