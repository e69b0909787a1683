#ifndef RADARFUSE_H
#define RADARFUSE_H

/* C interface of the radarfuse library. Every call returns an rf_status; on
 * failure rf_last_error() describes the problem for the calling thread.
 * Strings handed out through char** belong to the caller and are released
 * with rf_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RF_API __declspec(dllexport)
#else
#define RF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rf_status {
    RF_OK = 0,
    RF_E_INTERNAL = 1, /* unexpected failure inside the library */
    RF_E_INPUT = 2,    /* bad argument, configuration, file or data shape */
    RF_E_NUMERIC = 3   /* non-finite values or undefined statistics */
} rf_status;

#define RF_CLASSES 9

typedef struct rf_config rf_config;
typedef struct rf_dataset rf_dataset;
typedef struct rf_model rf_model;

/* Progress lines (one per epoch or fold); may be NULL. */
typedef void (*rf_progress_fn)(const char* line, void* user);

RF_API const char* rf_version(void);
RF_API const char* rf_last_error(void);
RF_API void rf_string_free(char* s);

/* ---- configuration ---- */
RF_API rf_status rf_config_new(rf_config** out);
RF_API void rf_config_free(rf_config* cfg);
RF_API rf_status rf_config_set(rf_config* cfg, const char* key, const char* value);
RF_API rf_status rf_config_get(const rf_config* cfg, const char* key, char** value);
RF_API rf_status rf_config_load_file(rf_config* cfg, const char* path);
/* All keys as "key = value" lines, loadable by rf_config_load_file. */
RF_API rf_status rf_config_dump(const rf_config* cfg, char** text);
/* One line per key: key, default value and description. */
RF_API rf_status rf_config_help(char** text);

/* ---- datasets ---- */
typedef struct rf_dataset_info {
    size_t nodes;
    size_t fast_bins;
    size_t window;
    size_t samples;
    size_t participants;
    size_t class_counts[RF_CLASSES];
} rf_dataset_info;

/* Synthesizes a recording from the data.* keys and seed. */
RF_API rf_status rf_dataset_generate(const rf_config* cfg, rf_dataset** out);
RF_API rf_status rf_dataset_load(const char* path, rf_dataset** out);
RF_API rf_status rf_dataset_save(const rf_dataset* ds, const char* path);
RF_API rf_status rf_dataset_info_get(const rf_dataset* ds, rf_dataset_info* info);
RF_API void rf_dataset_free(rf_dataset* ds);

/* ---- models ---- */
RF_API rf_status rf_model_load(const char* path, rf_model** out);
RF_API rf_status rf_model_save(const rf_model* model, const char* path);
RF_API rf_status rf_model_parameter_count(const rf_model* model, size_t* count);
RF_API void rf_model_free(rf_model* model);

/* ---- experiments ----
 * Splits hold out participant train.participant; validation and test sets
 * are drawn from the split seed so train and eval see the same test set. */

/* Trains one model; report is JSON with per-epoch history and test metrics. */
RF_API rf_status rf_train(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user,
                          rf_model** model, char** report_json);
/* Held-out test set metrics of a trained model, JSON. */
RF_API rf_status rf_evaluate(const rf_config* cfg, const rf_model* model, const rf_dataset* ds, char** report_json);
/* Leave-one-participant-out over every participant, JSON. */
RF_API rf_status rf_lopo(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user,
                         char** report_json);
/* Trains the compress.* schemes and sweeps channel SNR on the test set.
 * Returns per-seed rows and a mean/std summary, both CSV. */
RF_API rf_status rf_compress(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user,
                             char** rows_csv, char** summary_csv);
/* Node importance versus single-node ablation on the test set. CSV rows
 * plus a JSON summary with the rank correlations. */
RF_API rf_status rf_ablate(const rf_config* cfg, const rf_model* model, const rf_dataset* ds, char** csv,
                           char** summary_json);
/* Fused embedding of every sample: sample,participant,label,e0..eK as CSV. */
RF_API rf_status rf_embed(const rf_model* model, const rf_dataset* ds, char** csv);

#ifdef __cplusplus
}
#endif

#endif
