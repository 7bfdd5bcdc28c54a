// RunConfig parsing and serialization.

#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>

#include "sldc/error.hpp"
#include "sldc/harness.hpp"

namespace sldc {

namespace pt = boost::property_tree;

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof())
    throw Error(ErrorKind::Config, fmt::format("{}: cannot parse '{}'", key, text));
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "off" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::Config, fmt::format("{}: expected a boolean, got '{}'", key, text));
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Object>
Setter number(T Object::*field, Object RunConfig::*group) {
  return [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*group).*field = parse_number<T>(k, v); };
}

template <typename T>
Setter top(T RunConfig::*field) {
  return [=](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter simfield(T SimConfig::*field) {
  return [=](RunConfig& c, const std::string& k, const std::string& v) {
    if (!c.sim) c.sim = SimConfig{};
    (*c.sim).*field = parse_number<T>(k, v);
  };
}

void add_train_keys(std::map<std::string, Setter>& s, const std::string& section,
                    OperatorTrainConfig RunConfig::*group) {
  s[section + ".steps"] = number(&OperatorTrainConfig::steps, group);
  s[section + ".batch_size"] = number(&OperatorTrainConfig::batch_size, group);
  s[section + ".lr_start"] = number(&OperatorTrainConfig::lr_start, group);
  s[section + ".lr_end"] = number(&OperatorTrainConfig::lr_end, group);
  s[section + ".weight_decay"] = number(&OperatorTrainConfig::weight_decay, group);
}

template <typename Cfg>
void add_ce_keys(std::map<std::string, Setter>& s, const std::string& section, Cfg RunConfig::*group) {
  s[section + ".steps"] = number(&Cfg::steps, group);
  s[section + ".batch_size"] = number(&Cfg::batch_size, group);
  s[section + ".lr_start"] = number(&Cfg::lr_start, group);
  s[section + ".lr_end"] = number(&Cfg::lr_end, group);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["run.method"] = [](RunConfig& c, const std::string&, const std::string& v) { c.method = parse_method(v); };
    s["run.seed"] = top(&RunConfig::seed);
    s["run.ade"] = top(&RunConfig::ade);
    s["run.out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; };
    s["run.joint_reference"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.joint_reference = parse_bool(k, v);
    };
    s["input.manifest"] = [](RunConfig& c, const std::string&, const std::string& v) { c.manifest = v; };
    s["alpha1.gamma"] = top(&RunConfig::ridge_gamma);
    s["alpha1.alpha_temp"] = top(&RunConfig::alpha_temp);
    s["alpha2.gamma"] = top(&RunConfig::weak_gamma);
    s["alpha2.hidden"] = top(&RunConfig::hidden);
    s["alpha2.mc_per_dim"] = top(&RunConfig::mc_per_dim);
    add_train_keys(s, "alpha2", &RunConfig::weak_train);
    add_train_keys(s, "mlpdc", &RunConfig::mlp_train);
    s["oracle.mc_per_dim"] = top(&RunConfig::oracle_mc_per_dim);
    add_ce_keys(s, "ce", &RunConfig::ce);
    add_ce_keys(s, "refine", &RunConfig::refine);
    add_ce_keys(s, "joint", &RunConfig::joint);
    s["sim.dim"] = simfield(&SimConfig::dim);
    s["sim.tasks"] = simfield(&SimConfig::tasks);
    s["sim.classes_per_task"] = simfield(&SimConfig::classes_per_task);
    s["sim.train_per_class"] = simfield(&SimConfig::train_per_class);
    s["sim.test_per_class"] = simfield(&SimConfig::test_per_class);
    s["sim.class_separation"] = simfield(&SimConfig::class_separation);
    s["sim.drift_magnitude"] = simfield(&SimConfig::drift_magnitude);
    s["sim.kd_damping"] = simfield(&SimConfig::kd_damping);
    s["sim.aux_pool_size"] = simfield(&SimConfig::aux_pool_size);
    s["sim.seed"] = simfield(&SimConfig::seed);
    s["sim.drift_kind"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (!c.sim) c.sim = SimConfig{};
      c.sim->drift_kind = parse_drift_kind(v);
    };
    return s;
  }();
  return table;
}

RunConfig resolve(pt::ptree tree, const std::vector<std::pair<std::string, std::string>>& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key.find('.') == std::string::npos)
      throw Error(ErrorKind::Config, fmt::format("override '{}' must be section.key", key));
    tree.put(key, value);
  }

  RunConfig cfg;
  // The preset seeds the simulator block before individual [sim] keys apply.
  if (auto preset = tree.get_optional<std::string>("input.preset")) cfg.sim = sim_preset(*preset);
  bool sim_seed_given = false;

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw Error(ErrorKind::Config, fmt::format("key '{}' outside any [section]", section));
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      if (full == "input.preset") continue;
      auto it = setters().find(full);
      if (it == setters().end()) throw Error(ErrorKind::Config, fmt::format("unknown config key '{}'", full));
      it->second(cfg, full, node.data());
      if (full == "sim.seed") sim_seed_given = true;
    }
  }
  if (cfg.sim && !sim_seed_given) cfg.sim->seed = cfg.seed;
  for (auto* t : {&cfg.weak_train, &cfg.mlp_train}) t->seed = cfg.seed;
  cfg.ce.seed = cfg.refine.seed = cfg.joint.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "seqft_baseline" || name == "baseline") return Method::Baseline;
  if (name == "alpha1") return Method::Alpha1;
  if (name == "alpha2") return Method::Alpha2;
  if (name == "mlpdc") return Method::Mlpdc;
  if (name == "oracle") return Method::Oracle;
  throw Error(ErrorKind::Config, fmt::format("unknown method '{}'", name));
}

std::string to_string(Method method) {
  switch (method) {
    case Method::Baseline: return "seqft_baseline";
    case Method::Alpha1: return "alpha1";
    case Method::Alpha2: return "alpha2";
    case Method::Mlpdc: return "mlpdc";
    case Method::Oracle: return "oracle";
  }
  return "unknown";
}

void RunConfig::validate() const {
  if (sim.has_value() == manifest.has_value())
    throw Error(ErrorKind::Config, "config needs exactly one input: [input] preset/[sim] or [input] manifest");
  if (sim) sim->validate();
  if (manifest && method == Method::Oracle)
    throw Error(ErrorKind::Config, "oracle method needs a simulated stream");
  if (ade < 0) throw Error(ErrorKind::Config, "ade must be non-negative");
  if (!(ridge_gamma > 0.0)) throw Error(ErrorKind::Config, "alpha1.gamma must be positive");
  if (!(alpha_temp > 0.0)) throw Error(ErrorKind::Config, "alpha1.alpha_temp must be positive");
  if (weak_gamma < 0.0) throw Error(ErrorKind::Config, "alpha2.gamma must be non-negative");
  if (hidden < 0) throw Error(ErrorKind::Config, "alpha2.hidden must be non-negative");
  if (mc_per_dim < 1 || oracle_mc_per_dim < 1) throw Error(ErrorKind::Config, "mc_per_dim must be at least 1");
  weak_train.validate();
  mlp_train.validate();
  ce.validate();
  refine.validate();
  joint.validate();
}

nlohmann::json RunConfig::to_json() const {
  auto train = [](const OperatorTrainConfig& t) {
    return nlohmann::json{{"steps", t.steps}, {"batch_size", t.batch_size}, {"lr_start", t.lr_start},
                          {"lr_end", t.lr_end}, {"weight_decay", t.weight_decay}};
  };
  auto ce_json = [](const auto& c) {
    return nlohmann::json{{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr_start", c.lr_start},
                          {"lr_end", c.lr_end}};
  };
  nlohmann::json j;
  j["run"] = {{"method", to_string(method)}, {"seed", seed}, {"ade", ade}, {"joint_reference", joint_reference}};
  j["alpha1"] = {{"gamma", ridge_gamma}, {"alpha_temp", alpha_temp}};
  j["alpha2"] = train(weak_train);
  j["alpha2"]["gamma"] = weak_gamma;
  j["alpha2"]["hidden"] = hidden;
  j["alpha2"]["mc_per_dim"] = mc_per_dim;
  j["mlpdc"] = train(mlp_train);
  j["oracle"] = {{"mc_per_dim", oracle_mc_per_dim}};
  j["ce"] = ce_json(ce);
  j["refine"] = ce_json(refine);
  j["joint"] = ce_json(joint);
  if (sim) {
    j["sim"] = {{"dim", sim->dim},
                {"tasks", sim->tasks},
                {"classes_per_task", sim->classes_per_task},
                {"train_per_class", sim->train_per_class},
                {"test_per_class", sim->test_per_class},
                {"class_separation", sim->class_separation},
                {"drift_kind", to_string(sim->drift_kind)},
                {"drift_magnitude", sim->drift_magnitude},
                {"kd_damping", sim->kd_damping},
                {"aux_pool_size", sim->aux_pool_size},
                {"seed", sim->seed}};
  }
  if (manifest) j["input"] = {{"manifest", manifest->generic_string()}};
  return j;
}

RunConfig parse_run_config_text(const std::string& text,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Config, fmt::format("config line {}: {}", e.line(), e.message()));
  }
  return resolve(std::move(tree), overrides);
}

RunConfig parse_run_config(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  pt::ptree tree;
  if (!path.empty()) {
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::Config, fmt::format("{}: config file not found", path.string()));
    try {
      pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorKind::Config, fmt::format("{}:{}: {}", path.string(), e.line(), e.message()));
    }
  }
  RunConfig cfg = resolve(std::move(tree), overrides);
  if (cfg.manifest && cfg.manifest->is_relative() && !path.empty())
    cfg.manifest = path.parent_path() / *cfg.manifest;
  return cfg;
}

}  // namespace sldc
