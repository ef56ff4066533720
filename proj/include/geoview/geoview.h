/* C interface to the geoview library.
 *
 * Objects are opaque handles released with their *_free function. Every
 * function returns a gv_status; on failure gv_last_error() describes the
 * problem for the calling thread. Strings returned through char** outputs
 * are JSON documents owned by the caller and released with gv_string_free().
 */
#ifndef GEOVIEW_GEOVIEW_H
#define GEOVIEW_GEOVIEW_H

#include <stddef.h>

#if defined(_WIN32)
#define GV_API __declspec(dllexport)
#else
#define GV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gv_status {
  GV_OK = 0,
  GV_ERR_CONFIG = 3,
  GV_ERR_IO = 4,
  GV_ERR_CONTRACT = 5,
  GV_ERR_NUMERIC = 6,
  GV_ERR_INVARIANT = 7,
  GV_ERR_INTERNAL = 8
} gv_status;

typedef struct gv_dataset gv_dataset;
typedef struct gv_model gv_model;

GV_API const char* gv_version(void);
GV_API const char* gv_status_name(gv_status status);
/* Message of the last failed call on this thread; "" if none. */
GV_API const char* gv_last_error(void);
GV_API void gv_string_free(char* s);

/* Hash of a train config after defaults and validation. */
GV_API gv_status gv_config_hash(const char* config_json, char** hash_out);
/* The fully resolved train config (defaults filled in). */
GV_API gv_status gv_config_resolve(const char* config_json, char** config_out);

/* Datasets. `split` is "train" or "val"; the config is a train config. */
GV_API gv_status gv_dataset_generate(const char* config_json, const char* split, int workers,
                                     gv_dataset** out);
GV_API gv_status gv_dataset_load(const char* path, gv_dataset** out);
GV_API gv_status gv_dataset_save(const gv_dataset* ds, const char* path);
GV_API gv_status gv_dataset_info(const gv_dataset* ds, char** info_json);
GV_API void gv_dataset_free(gv_dataset* ds);

/* Models. */
GV_API gv_status gv_model_load(const char* checkpoint_path, gv_model** out);
GV_API gv_status gv_model_info(const gv_model* model, char** info_json);
/* Writes 2*T values (x0, y0, x1, y1, ...) for one sample of `ds`. */
GV_API gv_status gv_model_predict(const gv_model* model, const gv_dataset* ds, size_t sample,
                                  double* waypoints, size_t capacity);
GV_API void gv_model_free(gv_model* model);

/* Training. Datasets may be NULL, in which case they are generated from the
 * config. With a non-empty out_dir the checkpoint and reports are written
 * there. */
GV_API gv_status gv_train(const char* config_json, const gv_dataset* train,
                          const gv_dataset* val, const char* out_dir, int workers,
                          char** report_json);

/* Evaluation. The dataset must be rendered with the model's training rig. */
GV_API gv_status gv_evaluate(const gv_model* model, const gv_dataset* ds, int workers,
                             char** metrics_json);
GV_API gv_status gv_sweep(const gv_model* model, const gv_dataset* ds, int workers,
                          char** sweep_json);
/* `sets` is a comma-separated list of none, front_rear, sides, all. */
GV_API gv_status gv_counterfactual(const gv_model* model, const gv_dataset* ds,
                                   const char* sets, int workers, char** result_json);
/* Attention map of one sample as CSV (group,head,query,key,weight). */
GV_API gv_status gv_attention_csv(const gv_model* model, const gv_dataset* ds, size_t sample,
                                  char** csv_out);

/* Ablation grid over depth source x GFF; writes per-variant runs into
 * out_dir when non-empty. */
GV_API gv_status gv_ablate(const char* config_json, const char* out_dir, int workers,
                           char** result_json);

/* Reads sweep.json, counterfactual.json and ablation.json (whichever exist)
 * from in_dir and writes CSV tables, SVG plots and report.json to out_dir. */
GV_API gv_status gv_report(const char* in_dir, const char* out_dir, char** files_json);

#ifdef __cplusplus
}
#endif

#endif /* GEOVIEW_GEOVIEW_H */
