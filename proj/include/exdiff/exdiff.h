#ifndef EXDIFF_EXDIFF_H
#define EXDIFF_EXDIFF_H

#include <stddef.h>
#include <stdint.h>

#if defined(EXDIFF_BUILDING)
#define EXDIFF_API __attribute__((visibility("default")))
#else
#define EXDIFF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum exdiff_status {
  EXDIFF_OK = 0,
  EXDIFF_ERR_ARGUMENT = 1,
  EXDIFF_ERR_CONSTRUCTION = 2,
  EXDIFF_ERR_SPECTRAL = 3,
  EXDIFF_ERR_PRECONDITION = 4,
  EXDIFF_ERR_CONVERGENCE = 5,
  EXDIFF_ERR_ASSUMPTION = 6,
  EXDIFF_ERR_CONFIG = 7,
  EXDIFF_ERR_IO = 8,
  EXDIFF_ERR_STRUCTURE = 9,
  EXDIFF_ERR_ESTIMATOR = 10,
  EXDIFF_ERR_INTERNAL = 11
} exdiff_status;

typedef enum exdiff_engine {
  EXDIFF_EXACT_DIFFUSION = 0,
  EXDIFF_EXACT_DIFFUSION_PD = 1,
  EXDIFF_EXACT_DIFFUSION_ADAPTIVE = 2,
  EXDIFF_EXTRA = 3,
  EXDIFF_DIGING = 4,
  EXDIFF_AUG_DGM = 5
} exdiff_engine;

typedef enum exdiff_run_status { EXDIFF_RUN_CONVERGED = 0, EXDIFF_RUN_EXHAUSTED = 1, EXDIFF_RUN_DIVERGED = 2 } exdiff_run_status;

typedef struct exdiff_graph exdiff_graph;
typedef struct exdiff_matrix exdiff_matrix;
typedef struct exdiff_model exdiff_model;
typedef struct exdiff_run exdiff_run;

/* Message for the last failing call on this thread. Never NULL. */
EXDIFF_API const char* exdiff_last_error(void);
EXDIFF_API const char* exdiff_status_name(exdiff_status status);
EXDIFF_API const char* exdiff_version(void);

/* Graphs. `edges` holds 2 * n_edges indices. */
EXDIFF_API exdiff_status exdiff_graph_create(size_t n, const size_t* edges, size_t n_edges, exdiff_graph** out);
EXDIFF_API exdiff_status exdiff_graph_random(size_t n, double edge_probability, uint64_t seed, exdiff_graph** out);
EXDIFF_API exdiff_status exdiff_graph_load(const char* path, exdiff_graph** out);
EXDIFF_API exdiff_status exdiff_graph_save(const exdiff_graph* g, const char* path);
EXDIFF_API size_t exdiff_graph_size(const exdiff_graph* g);
EXDIFF_API size_t exdiff_graph_edge_count(const exdiff_graph* g);
EXDIFF_API exdiff_status exdiff_graph_edges(const exdiff_graph* g, size_t* edges);
EXDIFF_API void exdiff_graph_destroy(exdiff_graph* g);

/* Combination matrices. Dense arrays are N x N row-major, entry (l, k) scales data from l to k. */
EXDIFF_API exdiff_status exdiff_matrix_metropolis(const exdiff_graph* g, exdiff_matrix** out);
EXDIFF_API exdiff_status exdiff_matrix_averaging(const exdiff_graph* g, exdiff_matrix** out);
EXDIFF_API exdiff_status exdiff_matrix_from_dense(const exdiff_graph* g, const double* a, exdiff_matrix** out);
EXDIFF_API exdiff_status exdiff_matrix_load_csv(const exdiff_graph* g, const char* path, exdiff_matrix** out);
EXDIFF_API exdiff_status exdiff_matrix_save_csv(const exdiff_matrix* m, const char* path);
EXDIFF_API size_t exdiff_matrix_size(const exdiff_matrix* m);
EXDIFF_API exdiff_status exdiff_matrix_dense(const exdiff_matrix* m, double* a);
EXDIFF_API exdiff_status exdiff_matrix_perron(const exdiff_matrix* m, double* p, double* lambda2, double* lambda_n, double* rho_a);
EXDIFF_API exdiff_status exdiff_matrix_balanced(const exdiff_matrix* m, int* balanced, double* violation);
EXDIFF_API void exdiff_matrix_destroy(exdiff_matrix* m);

/* Cost models. */
EXDIFF_API exdiff_status exdiff_model_least_squares(uint64_t seed, size_t n_agents, size_t dim, size_t samples, exdiff_model** out);
EXDIFF_API exdiff_status exdiff_model_logistic(uint64_t seed, size_t n_agents, size_t dim, size_t samples, double ridge, double label_noise,
                                               exdiff_model** out);
/* r: n_agents blocks of dim x dim row-major; cross: n_agents blocks of dim. */
EXDIFF_API exdiff_status exdiff_model_mse(size_t n_agents, size_t dim, const double* r, const double* cross, exdiff_model** out);
EXDIFF_API exdiff_status exdiff_model_load(const char* path, exdiff_model** out);
EXDIFF_API exdiff_status exdiff_model_save(const exdiff_model* model, const char* path);
EXDIFF_API exdiff_status exdiff_model_set_weights(exdiff_model* model, const double* q);
EXDIFF_API size_t exdiff_model_agents(const exdiff_model* model);
EXDIFF_API size_t exdiff_model_dim(const exdiff_model* model);
EXDIFF_API exdiff_status exdiff_model_value(const exdiff_model* model, size_t agent, const double* w, double* value);
EXDIFF_API exdiff_status exdiff_model_gradient(const exdiff_model* model, size_t agent, const double* w, double* grad);
EXDIFF_API exdiff_status exdiff_model_bounds(const exdiff_model* model, double* nu, double* delta, size_t* k_o);
/* w_star and w_o have dim entries. */
EXDIFF_API exdiff_status exdiff_model_solve(const exdiff_model* model, double* w_star, double* w_o, double* residual);
EXDIFF_API void exdiff_model_destroy(exdiff_model* model);

/* Engines. Step sizes: `mu` (N entries) or, when NULL, the scalar `mu_scalar`; the adaptive engine uses `mu_o`. */
typedef struct exdiff_run_options {
  exdiff_engine engine;
  double mu_scalar;
  const double* mu;
  double mu_o;
  long max_iters;
  double stop_threshold;
  const double* w0; /* N x M row-major, NULL for zeros */
} exdiff_run_options;

EXDIFF_API void exdiff_run_options_init(exdiff_run_options* options);
EXDIFF_API exdiff_status exdiff_run_create(const exdiff_model* model, const exdiff_matrix* matrix, const exdiff_run_options* options, exdiff_run** out);
EXDIFF_API exdiff_run_status exdiff_run_result(const exdiff_run* r);
EXDIFF_API size_t exdiff_run_trace_length(const exdiff_run* r);
EXDIFF_API exdiff_status exdiff_run_trace_record(const exdiff_run* r, size_t index, long* iteration, long* comm_units, double* rel_error, double* grad_norm);
EXDIFF_API exdiff_status exdiff_run_final_iterate(const exdiff_run* r, double* w);
EXDIFF_API exdiff_status exdiff_run_write(const exdiff_run* r, const char* csv_path, const char* status_path);
EXDIFF_API void exdiff_run_destroy(exdiff_run* r);

/* Analysis. */
EXDIFF_API exdiff_status exdiff_norm_comparison(const exdiff_matrix* m, double* t_d_norm2, double* t_e_norm2, double* closed_form);

typedef struct exdiff_bound {
  double mu_bound;
  double alpha;
  double lambda;
  double rho;
  double c;
} exdiff_bound;

EXDIFF_API exdiff_status exdiff_diffusion_bound(const exdiff_matrix* m, const double* tau, double nu, double delta, size_t k_o, exdiff_bound* out);
EXDIFF_API exdiff_status exdiff_extra_bound(const exdiff_matrix* m, double nu, double delta, exdiff_bound* out);

typedef struct exdiff_two_agent {
  double spectral_radius_d;
  double spectral_radius_e;
  double delta_disc;
  double crosscheck_error;
  int diffusion_stable;
  int diffusion_sufficient;
  int extra_stable;
  int extra_predicted_unstable;
} exdiff_two_agent;

EXDIFF_API exdiff_status exdiff_two_agent_case(double a, double sigma2, double mu, double mu_e, exdiff_two_agent* out);

/* Config-driven commands. `out_dir` and `seed` may be NULL. */
typedef struct exdiff_command_options {
  const char* out_dir;
  const int64_t* seed;
  int jobs;
} exdiff_command_options;

EXDIFF_API exdiff_status exdiff_cmd_run(const char* config_path, const exdiff_command_options* options);
EXDIFF_API exdiff_status exdiff_cmd_stability_scan(const char* config_path, const exdiff_command_options* options);
EXDIFF_API exdiff_status exdiff_cmd_analyze(const char* config_path, const exdiff_command_options* options);
/* config_path may be NULL to use the built-in two-agent defaults. */
EXDIFF_API exdiff_status exdiff_cmd_two_agent(const char* config_path, const exdiff_command_options* options);

#ifdef __cplusplus
}
#endif

#endif
