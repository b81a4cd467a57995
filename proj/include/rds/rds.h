#ifndef RDS_RDS_H
#define RDS_RDS_H

/* C interface to the rdscp library.
 *
 * Every call returns an rds_status. On failure the message is available from
 * rds_last_error() on the same thread until the next failing call. Strings
 * returned through char** are owned by the caller and released with
 * rds_string_free(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rds_status {
  RDS_OK = 0,
  RDS_ERR_INVALID_ARGUMENT = 1,
  RDS_ERR_PARSE = 2,      /* malformed CSV, JSON or configuration */
  RDS_ERR_INFERENCE = 3,  /* no identifiable degree class */
  RDS_ERR_IO = 4,
  RDS_ERR_INTERNAL = 5
} rds_status;

typedef struct rds_config rds_config;
typedef struct rds_trajectory rds_trajectory;
typedef struct rds_fit rds_fit;

const char* rds_version(void);
const char* rds_last_error(void);
void rds_string_free(char* text);

/* Run configuration. A NULL path gives the defaults. */
rds_status rds_config_load(const char* path, rds_config** out);
rds_status rds_config_parse(const char* json_text, rds_config** out);
rds_status rds_config_set_seed(rds_config* config, uint64_t seed);
rds_status rds_config_to_json(const rds_config* config, char** out);
void rds_config_free(rds_config* config);

/* Simulated path under the configured population, inviters and stop rule. */
rds_status rds_simulate(const rds_config* config, rds_trajectory** out);
/* Ground truth of a simulated path; RDS_ERR_INVALID_ARGUMENT otherwise. */
rds_status rds_trajectory_truth_json(const rds_trajectory* trajectory, char** out);

rds_status rds_trajectory_load_csv(const char* path, const rds_config* config,
                                   rds_trajectory** out);
rds_status rds_trajectory_parse_csv(const char* csv_text, const rds_config* config,
                                    rds_trajectory** out);
rds_status rds_trajectory_to_csv(const rds_trajectory* trajectory, char** out);
rds_status rds_trajectory_write_csv(const rds_trajectory* trajectory, const char* path);
size_t rds_trajectory_recruits(const rds_trajectory* trajectory);
void rds_trajectory_free(rds_trajectory* trajectory);

rds_status rds_fit_run(const rds_trajectory* trajectory, const rds_config* config,
                       rds_fit** out);
rds_status rds_fit_to_json(const rds_fit* fit, char** out);
/* Number of fitted classes and the estimate of class `index`. */
size_t rds_fit_class_count(const rds_fit* fit);
rds_status rds_fit_class(const rds_fit* fit, size_t index, int* degree, double* size,
                         double* size_se, int* ok);
void rds_fit_free(rds_fit* fit);

/* Fits internally, then estimates prevalence or runs the proportionality
 * test. Both return a JSON report. */
rds_status rds_prevalence_json(const rds_trajectory* trajectory, const rds_config* config,
                               char** out);
rds_status rds_test_proportional_json(const rds_trajectory* trajectory,
                                      const rds_config* config, char** out);

/* Runs an experiment plan. `out_dir` (may be NULL) receives report.json and
 * the metric CSV tables. `seed` replaces the plan seed when `override_seed`
 * is non-zero. `passed` (may be NULL) is set to 1 when every check passed. */
rds_status rds_validate(const char* plan_path, const char* out_dir, int override_seed,
                        uint64_t seed, char** report_json, int* passed);

#ifdef __cplusplus
}
#endif

#endif
