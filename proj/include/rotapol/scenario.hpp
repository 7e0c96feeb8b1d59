#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rotapol {

// Runner controls that live outside the config file.  out_override replaces
// the config's output directory; threads <= 0 falls back to ROTAPOL_THREADS
// and then to 1.
struct ScenarioOptions {
  std::filesystem::path out_override;
  int threads = 0;
  bool gnuplot = false;
};

struct ArtifactEntry {
  std::string name;
  std::uint64_t bytes = 0;
  std::string fnv1a64;  // 16 hex digits of the content hash
};

struct ScenarioReport {
  std::string scenario;
  std::filesystem::path out_dir;
  std::vector<ArtifactEntry> artifacts;  // what manifest.json lists
  std::string text;                      // human-readable run summary
};

// Parses the strict JSON config (unknown keys are errors), runs the named
// scenario, and writes every artifact atomically (temp file + rename) plus a
// manifest.json with per-file content hashes.  The same config and seeds
// produce byte-identical artifacts; wall-clock time appears only in the
// manifest.  Failures throw Error; err_exit_code maps them to the process
// exit contract (config 2, numerics 3, I/O 4).
ScenarioReport run_scenario_json(const std::string& config_text,
                                 const ScenarioOptions& opts = {});
ScenarioReport run_scenario_file(const std::filesystem::path& config_path,
                                 const ScenarioOptions& opts = {});

// requested if positive, else ROTAPOL_THREADS if set and positive, else 1
int resolve_threads(int requested);

std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace rotapol
