#ifndef QDLAB_H
#define QDLAB_H

#include <stddef.h>
#include <stdint.h>

typedef enum QdlStatus {
  QDL_STATUS_OK = 0,
  QDL_STATUS_NULL_POINTER = 1,
  QDL_STATUS_INVALID_ARGUMENT = 2,
  QDL_STATUS_CONFIG = 3,
  QDL_STATUS_VALIDATION = 4,
  QDL_STATUS_IO = 5,
  QDL_STATUS_PARSE = 6,
  QDL_STATUS_VERSION = 7,
  QDL_STATUS_RUNTIME = 8,
  /*
   The record callback asked to stop.
   */
  QDL_STATUS_ABORTED = 9,
  /*
   No archive yet: the experiment has not been run.
   */
  QDL_STATUS_NOT_RUN = 10,
  QDL_STATUS_PANIC = 11,
} QdlStatus;

/*
 Opaque experiment handle.
 */
typedef struct QdlExperiment QdlExperiment;

/*
 One metrics row. `has_max_fitness` is 0 while the archive is empty.
 */
typedef struct QdlMetrics {
  uint64_t iteration;
  uint64_t evaluations;
  double qd_score;
  double coverage;
  double max_fitness;
  int has_max_fitness;
} QdlMetrics;

/*
 Called once per metrics record. Return non-zero to stop the run.
 */
typedef int (*QdlRecordCallback)(const struct QdlMetrics *record, void *user_data);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Last error message on this thread, or NULL. Valid until the next call
 into this library on the same thread.
 */
const char *qdl_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qdl_version(void);

/*
 Parses and validates a JSON experiment config.

 `base_dir` resolves relative centroid paths and may be NULL for the
 current directory. `workers` of 0 keeps the config value.

 # Safety
 `config_json` and a non-NULL `base_dir` must be NUL-terminated strings;
 `out` must be writable.
 */
enum QdlStatus qdl_experiment_new(const char *config_json,
                                  const char *base_dir,
                                  uint64_t seed,
                                  size_t workers,
                                  struct QdlExperiment **out);

/*
 Runs the experiment to its evaluation budget. Any earlier results are
 discarded. `callback` may be NULL.

 # Safety
 `exp` must come from [`qdl_experiment_new`]; `user_data` is passed through
 untouched.
 */
enum QdlStatus qdl_experiment_run(struct QdlExperiment *exp,
                                  QdlRecordCallback callback,
                                  void *user_data);

/*
 Number of metrics records from the last run.

 # Safety
 `exp` must be NULL or come from [`qdl_experiment_new`].
 */
size_t qdl_experiment_record_count(const struct QdlExperiment *exp);

/*
 Copies record `index` of the last run into `out`.

 # Safety
 `exp` must come from [`qdl_experiment_new`]; `out` must be writable.
 */
enum QdlStatus qdl_experiment_record(const struct QdlExperiment *exp,
                                     size_t index,
                                     struct QdlMetrics *out);

/*
 Writes the final archive of the last run as JSON, atomically.

 # Safety
 `exp` must come from [`qdl_experiment_new`]; `path` must be a
 NUL-terminated string.
 */
enum QdlStatus qdl_experiment_save_archive(const struct QdlExperiment *exp, const char *path);

/*
 # Safety
 `exp` must be NULL or come from [`qdl_experiment_new`] and not be used
 afterwards.
 */
void qdl_experiment_free(struct QdlExperiment *exp);

/*
 QD metrics of an archive file. `qd_offset` only applies to
 single-objective archives. `iteration` and `evaluations` are set to 0.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum QdlStatus qdl_archive_metrics(const char *path, double qd_offset, struct QdlMetrics *out);

/*
 Hypervolume (maximization) of `n` points stored as `[f1, f2]` pairs in
 `points`, against `reference`.

 # Safety
 `points` must hold `2 * n` readable doubles (it may be NULL when `n` is
 0); `reference` must hold 2; `out` must be writable.
 */
enum QdlStatus qdl_hypervolume_2d(const double *points,
                                  size_t n,
                                  const double *reference,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QDLAB_H */
