/* Public C interface of the msm shared library.
 *
 * Objects are opaque handles created and destroyed by the library; every
 * fallible call returns an msm_status and the per-thread message from
 * msm_last_error() describes the most recent failure. Structured
 * configuration crosses the boundary as JSON text; bulk data stays in files
 * (model documents, MSMSEQ1 sequence containers, recordings).
 */
#ifndef MSM_MSM_H
#define MSM_MSM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MSM_API __declspec(dllexport)
#else
#define MSM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msm_status {
    MSM_OK = 0,
    MSM_E_INVALID = 1, /* contract violation or bad argument */
    MSM_E_IO = 2,
    MSM_E_PARSE = 3,
    MSM_E_VERSION = 4,
    MSM_E_CORRUPT = 5,
    MSM_E_SHAPE = 6,
    MSM_E_NUMERIC = 7,
} msm_status;

typedef struct msm_model msm_model;
typedef struct msm_dataset msm_dataset;
typedef struct msm_graph msm_graph;
typedef struct msm_posterior msm_posterior;

MSM_API const char* msm_version(void);

/* message for the most recent failure on this thread; never NULL */
MSM_API const char* msm_last_error(void);

/* every string returned through a char** out-parameter is released here */
MSM_API void msm_string_free(char* text);

/* ---- models ---------------------------------------------------------- */

MSM_API msm_status msm_model_load(const char* path, msm_model** out);
MSM_API msm_status msm_model_save(const msm_model* model, const char* path);
MSM_API void msm_model_free(msm_model* model);

/* JSON {"valid": bool, "violations": [...]} */
MSM_API msm_status msm_model_validate(const msm_model* model, char** report_json);

/* JSON {"d":..,"M":..,"K":..,"K0":..,"hidden_per_output":..,
         "activation":..,"locally_connected":..,"seed":..} */
MSM_API msm_status msm_model_info(const msm_model* model, char** info_json);

/* ---- datasets -------------------------------------------------------- */

MSM_API msm_status msm_dataset_load(const char* path, msm_dataset** out);
MSM_API msm_status msm_dataset_save(const msm_dataset* dataset, const char* path);
MSM_API msm_status msm_dataset_export_csv(const msm_dataset* dataset, const char* path);
MSM_API void msm_dataset_free(msm_dataset* dataset);

MSM_API size_t msm_dataset_num_sequences(const msm_dataset* dataset);
MSM_API size_t msm_dataset_length(const msm_dataset* dataset);
MSM_API size_t msm_dataset_dim(const msm_dataset* dataset);

/* ---- graphs ---------------------------------------------------------- */

MSM_API msm_status msm_graph_load(const char* path, msm_graph** out);
MSM_API msm_status msm_graph_save(const msm_graph* graph, const char* path);
MSM_API void msm_graph_free(msm_graph* graph);

/* ---- ground-truth generation ----------------------------------------- */

/* spec_json: {"d":..,"M":..,"K":..,"hidden_per_output":..}
 * profile_json: {"variant":"zero|nonzero|relu",
 *                "sparsity":{"max_parents":..} or {"fraction":..},
 *                "min_parents":..,"transition_noise_std":..,"init_mean_std":..,
 *                "init_emission_std":..,"self_stay_prob":..,"weight_scale":..,
 *                "deterministic":..}
 * all profile fields optional */
MSM_API msm_status msm_sample_ground_truth(const char* spec_json, const char* profile_json,
                                           uint64_t seed, msm_model** out_model,
                                           msm_graph** out_graph);

/* states_csv_path may be NULL; when given, the true state paths are written
 * as CSV (seq,t,state) */
MSM_API msm_status msm_sample_sequences(const msm_model* model, const char* profile_json,
                                        uint64_t seed, size_t n_sequences, size_t length,
                                        const char* states_csv_path, msm_dataset** out);

/* ---- training --------------------------------------------------------- */

/* train_json: {"max_epochs":..,"batch_size":..,"learning_rate":..,
 *              "plateau_factor":..,"plateau_patience":..,"max_plateau_drops":..,
 *              "plateau_rel_tol":..,"n_restarts":..,"optimizer":"adam|plain",
 *              "seed":..,"shuffle":..,"init_weight_scale":..,"init_log_var":..}
 * mask_graph may be NULL for dense connectivity.
 * report_json: {"restart_chosen":..,"final_learning_rate":..,"wall_seconds":..,
 *               "restart_final_log_lik":[..],
 *               "epochs":[{"epoch":..,"log_lik":..,"lr":..},...]} */
MSM_API msm_status msm_fit(const msm_dataset* dataset, const char* spec_json,
                           const char* train_json, const msm_graph* mask_graph,
                           msm_model** out_model, char** report_json);

/* ---- inference -------------------------------------------------------- */

MSM_API msm_status msm_posteriors(const msm_model* model, const msm_dataset* dataset,
                                  size_t sequence_index, msm_posterior** out);
MSM_API void msm_posterior_free(msm_posterior* posterior);

MSM_API double msm_posterior_log_lik(const msm_posterior* posterior);
/* row-major [rows x states] gamma matrix, valid until the posterior is freed */
MSM_API const double* msm_posterior_gamma(const msm_posterior* posterior, size_t* rows,
                                          size_t* states);
/* argmax states, length = gamma rows */
MSM_API msm_status msm_posterior_decode(const msm_posterior* posterior, size_t* path,
                                        size_t path_len);

/* ---- evaluation ------------------------------------------------------- */

/* result_json: {"err":..,"sigma":[..],"per_state_l2":[..],"n_samples":..} */
MSM_API msm_status msm_eval_l2(const msm_model* estimate, const msm_model* truth,
                               const msm_dataset* heldout, size_t max_samples,
                               char** result_json);

/* result_json: {"averaged_f1":..,"per_state_f1":[..],"precision":[..],
 *               "recall":[..],"sigma":[..],"tau":..,"empty_states":[..]} */
MSM_API msm_status msm_eval_f1(const msm_model* estimate, const msm_model* truth,
                               const msm_graph* truth_graph, const msm_dataset* heldout,
                               double tau, char** result_json);

/* estimated graph alone (posterior-classified Jacobian thresholding) */
MSM_API msm_status msm_estimate_graph(const msm_model* model, const msm_dataset* heldout,
                                      double tau, msm_graph** out);

MSM_API msm_status msm_transition_frequency(const msm_model* model,
                                            const msm_dataset* dataset, size_t kernel_len,
                                            double sample_rate_hz, double* out_hz);

/* ---- signal preprocessing --------------------------------------------- */

/* config_json: {"sample_rate_hz":.. (CSV input only),
 *               "sidecar":"path" (raw input only),
 *               "notch_hz":..,"notch_q":..,"target_hz":..,"epoch_seconds":..,
 *               "channels":[names or indices, optional selection]}
 * input ending in .csv is parsed as CSV, anything else as raw f64 frames */
MSM_API msm_status msm_preprocess(const char* input_path, const char* config_json,
                                  const char* output_path, char** manifest_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MSM_MSM_H */
