#ifndef ROTAPOL_H
#define ROTAPOL_H

/* C interface to the scenario runner.  Status codes follow the process exit
 * contract: 0 success, 2 invalid configuration, 3 numerics failure, 4 I/O
 * error.  All returned strings are UTF-8; pointers returned by accessors stay
 * valid until rp_run_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct rp_run rp_run;

const char* rp_version(void);

/* Runs the scenario described by the JSON config file at config_path.
 *   out_dir  optional override of the config's output directory (NULL keeps
 *            the configured one)
 *   threads  worker count for parallel scenarios; <= 0 falls back to the
 *            ROTAPOL_THREADS environment variable, then to 1
 *   gnuplot  nonzero additionally writes a ready-to-run plot script artifact
 * On success returns 0 and, when out is not NULL, *out receives a handle to
 * inspect the run.  On failure returns the nonzero status code and, when
 * err_msg is not NULL, *err_msg receives a malloc'd description to release
 * with rp_string_free. */
int rp_run_scenario(const char* config_path, const char* out_dir, int threads,
                    int gnuplot, rp_run** out, char** err_msg);

/* Same contract, but the config JSON is passed directly as text. */
int rp_run_scenario_text(const char* config_json, const char* out_dir, int threads,
                         int gnuplot, rp_run** out, char** err_msg);

const char* rp_run_scenario_name(const rp_run* run);
const char* rp_run_output_dir(const rp_run* run);
/* Human-readable run summary, newline terminated. */
const char* rp_run_summary(const rp_run* run);

/* Artifacts as listed in manifest.json, sorted by name. */
size_t rp_run_artifact_count(const rp_run* run);
const char* rp_run_artifact_name(const rp_run* run, size_t index);
/* 16 lowercase hex digits of the FNV-1a64 content hash. */
const char* rp_run_artifact_hash(const rp_run* run, size_t index);
uint64_t rp_run_artifact_bytes(const rp_run* run, size_t index);

void rp_run_free(rp_run* run);
void rp_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* ROTAPOL_H */
