/* C interface to the uwmmse library.
 *
 * Objects are opaque handles created by *_new / *_load / *_generate and
 * released by the matching *_free (NULL is accepted). Every fallible call
 * returns a uwm_status; on failure uwm_last_error() holds a message for the
 * calling thread until its next failing call.
 */
#ifndef UWMMSE_UWMMSE_H
#define UWMMSE_UWMMSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UWM_API __declspec(dllexport)
#else
#define UWM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uwm_status {
  UWM_OK = 0,
  UWM_INVALID_ARGUMENT = 1,
  UWM_DEGENERATE_GEOMETRY = 2,
  UWM_UNSUPPORTED_SIZE = 3,
  UWM_NUMERICAL_DEGENERACY = 4,
  UWM_DOMAIN_ERROR = 5,
  UWM_NON_FINITE = 6,
  UWM_PARSE_ERROR = 7,
  UWM_IO_ERROR = 8,
  UWM_CONFIG_ERROR = 9,
  UWM_INTERNAL_ERROR = 100
} uwm_status;

UWM_API const char* uwm_status_name(uwm_status status);
UWM_API const char* uwm_last_error(void);

/* Experiment configuration -------------------------------------------- */

typedef struct uwm_config uwm_config;

UWM_API uwm_status uwm_config_new(uwm_config** out);
UWM_API uwm_status uwm_config_load(const char* path, uwm_config** out);
/* Overrides from a JSON object; unknown keys are UWM_CONFIG_ERROR. */
UWM_API uwm_status uwm_config_apply_json(uwm_config* config, const char* json);
UWM_API uwm_status uwm_config_set_seed(uwm_config* config, uint64_t seed);
/* Writes the config as JSON. With buf == NULL only *needed is set. */
UWM_API uwm_status uwm_config_to_json(const uwm_config* config, char* buf, size_t capacity,
                                      size_t* needed);
UWM_API void uwm_config_free(uwm_config* config);

/* Channels ------------------------------------------------------------- */

typedef struct uwm_channel uwm_channel;

/* Geometric topology from topology_seed, Rayleigh fading from fading_seed. */
UWM_API uwm_status uwm_channel_generate(size_t m, double sigma, uint64_t topology_seed,
                                        uint64_t fading_seed, uwm_channel** out);
/* h is m*m gains, row-major, entry (i, j) = gain from transmitter j at receiver i. */
UWM_API uwm_status uwm_channel_from_matrix(size_t m, const double* h, double sigma,
                                           uwm_channel** out);
UWM_API size_t uwm_channel_size(const uwm_channel* channel);
UWM_API uwm_status uwm_channel_copy_matrix(const uwm_channel* channel, double* out, size_t capacity);
UWM_API void uwm_channel_free(uwm_channel* channel);

/* Power control -------------------------------------------------------- */

/* Sum-rate in bits/s/Hz of the m powers p. */
UWM_API uwm_status uwm_sum_rate(const uwm_channel* channel, const double* p, size_t m, double* out);
/* Classical WMMSE; *iterations (may be NULL) receives the sweeps run. */
UWM_API uwm_status uwm_wmmse(const uwm_channel* channel, double p_max, size_t max_iter, double tol,
                             double* p_out, size_t m, size_t* iterations);
UWM_API uwm_status uwm_truncated_wmmse(const uwm_channel* channel, double p_max, size_t k,
                                       double* p_out, size_t m);

/* Unfolded model ------------------------------------------------------- */

typedef struct uwm_model uwm_model;

/* Identity initialization: equals truncated WMMSE with `layers` sweeps. */
UWM_API uwm_status uwm_model_init(size_t layers, double p_max, double sigma, uint64_t seed,
                                  uwm_model** out);
UWM_API uwm_status uwm_model_load(const char* path, uwm_model** out);
UWM_API uwm_status uwm_model_save(const uwm_model* model, const char* path);
UWM_API size_t uwm_model_layers(const uwm_model* model);
UWM_API size_t uwm_model_parameter_count(const uwm_model* model);
UWM_API uwm_status uwm_model_power(const uwm_model* model, const uwm_channel* channel, double* p_out,
                                   size_t m);
UWM_API void uwm_model_free(uwm_model* model);

/* Experiment commands -------------------------------------------------- */

/* Text lines produced by a command plus an overall verdict: every ordering
 * check (or selftest suite) passed. */
typedef struct uwm_report uwm_report;

UWM_API size_t uwm_report_line_count(const uwm_report* report);
UWM_API const char* uwm_report_line(const uwm_report* report, size_t index);
UWM_API int uwm_report_all_passed(const uwm_report* report);
UWM_API void uwm_report_free(uwm_report* report);

/* `methods` is a comma list over wmmse, tr_wmmse, uwmmse, ro_uwmmse.
 * `checkpoints` is a comma list of method=path items; a bare path binds to
 * uwmmse. Either may be NULL or empty where not needed. */
UWM_API uwm_status uwm_cmd_generate(const uwm_config* config, const char* out_dir, uwm_report** out);
UWM_API uwm_status uwm_cmd_train(const uwm_config* config, const char* out_dir,
                                 const char* resume_checkpoint, uwm_report** out);
UWM_API uwm_status uwm_cmd_eval(const uwm_config* config, const char* dataset_dir,
                                const char* methods, const char* checkpoints, const char* out_dir,
                                uwm_report** out);
UWM_API uwm_status uwm_cmd_sweep_density(const uwm_config* config, const char* methods,
                                         const char* checkpoints, const char* out_dir,
                                         uwm_report** out);
UWM_API uwm_status uwm_cmd_sweep_size(const uwm_config* config, const char* methods,
                                      const char* checkpoints, const char* out_dir,
                                      uwm_report** out);
UWM_API uwm_status uwm_cmd_bench_time(const uwm_config* config, const char* checkpoint,
                                      const char* dataset_dir, const char* out_dir,
                                      uwm_report** out);
UWM_API uwm_status uwm_cmd_selftest(uint64_t seed, uwm_report** out);

#ifdef __cplusplus
}
#endif

#endif /* UWMMSE_UWMMSE_H */
