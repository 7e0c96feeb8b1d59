#include "rotapol.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <utility>

#include "rotapol/errors.hpp"
#include "rotapol/scenario.hpp"

struct rp_run {
  rotapol::ScenarioReport report;
  std::string out_dir;  // cached so the accessor can hand out a stable pointer
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int run_common(bool from_file, const char* config, const char* out_dir, int threads,
               int gnuplot, rp_run** out, char** err_msg) {
  if (out) *out = nullptr;
  if (err_msg) *err_msg = nullptr;
  if (!config) {
    if (err_msg) *err_msg = dup_string("ConfigInvalid: config argument is null");
    return 2;
  }
  try {
    rotapol::ScenarioOptions opts;
    if (out_dir && *out_dir) opts.out_override = out_dir;
    opts.threads = threads;
    opts.gnuplot = gnuplot != 0;
    rotapol::ScenarioReport rep = from_file ? rotapol::run_scenario_file(config, opts)
                                            : rotapol::run_scenario_json(config, opts);
    if (out) {
      auto* run = new rp_run{std::move(rep), {}};
      run->out_dir = run->report.out_dir.string();
      *out = run;
    }
    return 0;
  } catch (const rotapol::Error& e) {
    if (err_msg) *err_msg = dup_string(e.what());
    return rotapol::err_exit_code(e.code());
  } catch (const std::bad_alloc&) {
    if (err_msg) *err_msg = dup_string("NumericsFailure: out of memory");
    return 3;
  } catch (const std::exception& e) {
    if (err_msg) *err_msg = dup_string(std::string("NumericsFailure: ") + e.what());
    return 3;
  }
}

}  // namespace

extern "C" {

const char* rp_version(void) { return "0.1.0"; }

int rp_run_scenario(const char* config_path, const char* out_dir, int threads,
                    int gnuplot, rp_run** out, char** err_msg) {
  return run_common(true, config_path, out_dir, threads, gnuplot, out, err_msg);
}

int rp_run_scenario_text(const char* config_json, const char* out_dir, int threads,
                         int gnuplot, rp_run** out, char** err_msg) {
  return run_common(false, config_json, out_dir, threads, gnuplot, out, err_msg);
}

const char* rp_run_scenario_name(const rp_run* run) {
  return run ? run->report.scenario.c_str() : nullptr;
}

const char* rp_run_output_dir(const rp_run* run) {
  return run ? run->out_dir.c_str() : nullptr;
}

const char* rp_run_summary(const rp_run* run) {
  return run ? run->report.text.c_str() : nullptr;
}

size_t rp_run_artifact_count(const rp_run* run) {
  return run ? run->report.artifacts.size() : 0;
}

const char* rp_run_artifact_name(const rp_run* run, size_t index) {
  if (!run || index >= run->report.artifacts.size()) return nullptr;
  return run->report.artifacts[index].name.c_str();
}

const char* rp_run_artifact_hash(const rp_run* run, size_t index) {
  if (!run || index >= run->report.artifacts.size()) return nullptr;
  return run->report.artifacts[index].fnv1a64.c_str();
}

uint64_t rp_run_artifact_bytes(const rp_run* run, size_t index) {
  if (!run || index >= run->report.artifacts.size()) return 0;
  return run->report.artifacts[index].bytes;
}

void rp_run_free(rp_run* run) { delete run; }

void rp_string_free(char* s) { std::free(s); }

}  // extern "C"
