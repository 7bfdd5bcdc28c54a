#include "sldc/manifest.hpp"

#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/core.h>

#include "sldc/error.hpp"

namespace sldc {

namespace pt = boost::property_tree;

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("{}: cannot open for writing", path.string()));
  std::vector<std::string> names;
  for (const auto& t : manifest.tasks) names.push_back(t.name);
  out << "# task stream manifest\n[stream]\n";
  out << "format = " << kManifestFormat << '\n';
  out << "dim = " << manifest.dim << '\n';
  out << "order = " << boost::algorithm::join(names, ",") << '\n';
  if (manifest.final_train) out << "final_train = " << manifest.final_train->generic_string() << '\n';
  for (const auto& t : manifest.tasks) {
    out << "\n[" << t.name << "]\n";
    out << "train_prev = " << t.train_prev.generic_string() << '\n';
    out << "train_curr = " << t.train_curr.generic_string() << '\n';
    out << "test = " << t.test.generic_string() << '\n';
    if (t.aux_prev && t.aux_curr) {
      out << "aux_prev = " << t.aux_prev->generic_string() << '\n';
      out << "aux_curr = " << t.aux_curr->generic_string() << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::Io, fmt::format("{}: write failed", path.string()));
}

Manifest read_manifest(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::Io, fmt::format("{}: manifest not found", path.string()));
    throw Error(ErrorKind::Format, fmt::format("{}: {}", path.string(), e.message()));
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& rel) -> std::filesystem::path {
    std::filesystem::path p(rel);
    p = p.is_absolute() ? p : base / p;
    if (!std::filesystem::exists(p))
      throw Error(ErrorKind::Io, fmt::format("{}: referenced dump {} does not exist", path.string(), p.string()));
    return p;
  };
  auto need = [&](const pt::ptree& section, const std::string& section_name, const std::string& key) {
    auto v = section.get_optional<std::string>(key);
    if (!v) throw Error(ErrorKind::Format, fmt::format("{}: [{}] missing key '{}'", path.string(), section_name, key));
    return *v;
  };

  const auto stream = tree.get_child_optional("stream");
  if (!stream) throw Error(ErrorKind::Format, fmt::format("{}: missing [stream] section", path.string()));
  if (need(*stream, "stream", "format") != kManifestFormat)
    throw Error(ErrorKind::Format, fmt::format("{}: unsupported manifest format", path.string()));

  Manifest m;
  try {
    m.dim = std::stoi(need(*stream, "stream", "dim"));
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Format, fmt::format("{}: dim is not an integer", path.string()));
  }
  if (auto ft = stream->get_optional<std::string>("final_train")) m.final_train = resolve(*ft);

  std::vector<std::string> order;
  const auto order_text = need(*stream, "stream", "order");
  boost::algorithm::split(order, order_text, boost::algorithm::is_any_of(","));
  for (auto& name : order) {
    boost::algorithm::trim(name);
    if (name.empty()) continue;
    const auto section = tree.get_child_optional(name);
    if (!section) throw Error(ErrorKind::Format, fmt::format("{}: task section [{}] missing", path.string(), name));
    ManifestTask t;
    t.name = name;
    t.train_prev = resolve(need(*section, name, "train_prev"));
    t.train_curr = resolve(need(*section, name, "train_curr"));
    t.test = resolve(need(*section, name, "test"));
    auto ap = section->get_optional<std::string>("aux_prev");
    auto ac = section->get_optional<std::string>("aux_curr");
    if (ap.has_value() != ac.has_value())
      throw Error(ErrorKind::Format, fmt::format("{}: [{}] needs both aux_prev and aux_curr", path.string(), name));
    if (ap) {
      t.aux_prev = resolve(*ap);
      t.aux_curr = resolve(*ac);
    }
    m.tasks.push_back(std::move(t));
  }
  if (m.tasks.empty()) throw Error(ErrorKind::Format, fmt::format("{}: no tasks listed", path.string()));
  return m;
}

}  // namespace sldc
