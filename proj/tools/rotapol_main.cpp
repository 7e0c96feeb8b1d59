#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "rotapol.h"

// The positional scenario name is redundant with the config's "scenario" key
// on purpose: a shell history entry then documents what ran, and a mismatch
// catches the classic copy-the-wrong-config mistake before any work starts.
int main(int argc, char** argv) {
  CLI::App app{"stationary-light polariton toolkit"};
  app.footer("exit codes: 0 ok, 2 invalid config, 3 numerics failure, 4 I/O error");

  std::string scenario;
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  bool gnuplot = false;
  app.add_option("scenario", scenario,
                 "one of: derive, landau, evolve, cyclotron, rotate-image, validate, scan")
      ->required();
  app.add_option("--config", config_path, "path to the JSON config file")->required();
  app.add_option("--out", out_dir, "override the config's output directory");
  app.add_option("--threads", threads,
                 "worker threads for scan (default: ROTAPOL_THREADS, then 1)");
  app.add_flag("--gnuplot", gnuplot, "also write a ready-to-run gnuplot script");
  CLI11_PARSE(app, argc, argv);

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "rotapol: IoError: cannot open config '%s'\n", config_path.c_str());
    return 4;
  }
  std::string config_text((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) {
    std::fprintf(stderr, "rotapol: IoError: cannot read config '%s'\n", config_path.c_str());
    return 4;
  }

  // Malformed JSON or a missing key falls through to the library so the error
  // message comes from one place.
  const nlohmann::json root = nlohmann::json::parse(config_text, nullptr, false);
  if (root.is_object() && root.contains("scenario") && root["scenario"].is_string() &&
      root["scenario"].get<std::string>() != scenario) {
    std::fprintf(stderr,
                 "rotapol: ConfigInvalid: config declares scenario '%s' but '%s' was "
                 "requested\n",
                 root["scenario"].get<std::string>().c_str(), scenario.c_str());
    return 2;
  }

  rp_run* run = nullptr;
  char* err = nullptr;
  const int status =
      rp_run_scenario_text(config_text.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                           threads, gnuplot ? 1 : 0, &run, &err);
  if (status != 0) {
    std::fprintf(stderr, "rotapol: %s\n", err ? err : "unknown error");
    rp_string_free(err);
    return status;
  }

  std::fputs(rp_run_summary(run), stdout);
  std::printf("wrote %zu artifacts to %s\n", rp_run_artifact_count(run),
              rp_run_output_dir(run));
  rp_run_free(run);
  return 0;
}
