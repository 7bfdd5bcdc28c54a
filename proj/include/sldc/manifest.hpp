#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sldc {

/// Stream manifest: an INI file listing the FTD dumps of a task stream.
///
///   [stream]
///   format = sldc-manifest-v1
///   dim = 64
///   order = task01,task02      ; sections in processing order
///   final_train = final_train.ftd   ; optional, joint-training reference
///   [task01]
///   train_prev = ...  train_curr = ...  test = ...
///   aux_prev = ...  aux_curr = ...     ; optional pair
///
/// Relative paths resolve against the manifest's directory.
struct ManifestTask {
  std::string name;
  std::filesystem::path train_prev, train_curr, test;
  std::optional<std::filesystem::path> aux_prev, aux_curr;
};

struct Manifest {
  int dim = 0;
  std::vector<ManifestTask> tasks;
  std::optional<std::filesystem::path> final_train;
};

inline constexpr const char* kManifestFormat = "sldc-manifest-v1";

// Paths are written as given (normally relative to the manifest directory).
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
// Returned paths are resolved; throws Format on malformed files, Io on missing dumps.
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace sldc
