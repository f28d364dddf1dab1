#include "exdiff/exdiff.h"

#include <cstdlib>
#include <memory>
#include <string>

#include "algorithms.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "graph.hpp"
#include "io_util.hpp"
#include "stability.hpp"

struct exdiff_graph {
  exdiff::Graph g;
};

struct exdiff_matrix {
  std::unique_ptr<exdiff::Network> net;
};

struct exdiff_model {
  std::shared_ptr<exdiff::CostModel> m;
};

struct exdiff_run {
  exdiff::RunResult r;
};

namespace {

thread_local std::string last_error;

exdiff_status to_status(exdiff::ErrorKind kind) {
  using exdiff::ErrorKind;
  switch (kind) {
    case ErrorKind::construction: return EXDIFF_ERR_CONSTRUCTION;
    case ErrorKind::spectral: return EXDIFF_ERR_SPECTRAL;
    case ErrorKind::precondition: return EXDIFF_ERR_PRECONDITION;
    case ErrorKind::convergence: return EXDIFF_ERR_CONVERGENCE;
    case ErrorKind::assumption: return EXDIFF_ERR_ASSUMPTION;
    case ErrorKind::configuration: return EXDIFF_ERR_CONFIG;
    case ErrorKind::io: return EXDIFF_ERR_IO;
    case ErrorKind::structure: return EXDIFF_ERR_STRUCTURE;
    case ErrorKind::estimator: return EXDIFF_ERR_ESTIMATOR;
  }
  return EXDIFF_ERR_INTERNAL;
}

template <typename F>
exdiff_status guarded(F&& fn) {
  try {
    fn();
    last_error.clear();
    return EXDIFF_OK;
  } catch (const exdiff::Error& e) {
    last_error = e.what();
    return to_status(e.kind());
  } catch (const std::exception& e) {
    last_error = e.what();
    return EXDIFF_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return EXDIFF_ERR_INTERNAL;
  }
}

exdiff_status bad_argument(const char* what) {
  last_error = what;
  return EXDIFF_ERR_ARGUMENT;
}

exdiff::Overrides overrides_from(const exdiff_command_options* options) {
  exdiff::Overrides o;
  if (!options) return o;
  if (options->out_dir) o.out_dir = options->out_dir;
  if (options->seed) o.seed = *options->seed;
  o.jobs = options->jobs > 0 ? options->jobs : 1;
  return o;
}

template <typename Cmd>
exdiff_status run_command(const char* config_path, const exdiff_command_options* options, Cmd cmd) {
  if (!config_path) return bad_argument("config path is NULL");
  return guarded([&] { cmd(exdiff::load_config(config_path, overrides_from(options))); });
}

}  // namespace

extern "C" {

const char* exdiff_last_error(void) { return last_error.c_str(); }

const char* exdiff_status_name(exdiff_status status) {
  switch (status) {
    case EXDIFF_OK: return "ok";
    case EXDIFF_ERR_ARGUMENT: return "invalid argument";
    case EXDIFF_ERR_CONSTRUCTION: return "construction error";
    case EXDIFF_ERR_SPECTRAL: return "spectral error";
    case EXDIFF_ERR_PRECONDITION: return "precondition error";
    case EXDIFF_ERR_CONVERGENCE: return "convergence error";
    case EXDIFF_ERR_ASSUMPTION: return "assumption violation";
    case EXDIFF_ERR_CONFIG: return "configuration error";
    case EXDIFF_ERR_IO: return "I/O error";
    case EXDIFF_ERR_STRUCTURE: return "structure error";
    case EXDIFF_ERR_ESTIMATOR: return "estimator degeneracy";
    case EXDIFF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* exdiff_version(void) { return "1.0.0"; }

exdiff_status exdiff_graph_create(size_t n, const size_t* edges, size_t n_edges, exdiff_graph** out) {
  if (!out || (n_edges && !edges)) return bad_argument("NULL argument");
  return guarded([&] {
    std::vector<exdiff::Edge> e;
    for (size_t i = 0; i < n_edges; ++i) e.emplace_back(edges[2 * i], edges[2 * i + 1]);
    *out = new exdiff_graph{exdiff::Graph(n, e)};
  });
}

exdiff_status exdiff_graph_random(size_t n, double edge_probability, uint64_t seed, exdiff_graph** out) {
  if (!out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_graph{exdiff::random_connected_graph(n, edge_probability, seed)}; });
}

exdiff_status exdiff_graph_load(const char* path, exdiff_graph** out) {
  if (!path || !out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_graph{exdiff::Graph::load_json(path)}; });
}

exdiff_status exdiff_graph_save(const exdiff_graph* g, const char* path) {
  if (!g || !path) return bad_argument("NULL argument");
  return guarded([&] { g->g.save_json(path); });
}

size_t exdiff_graph_size(const exdiff_graph* g) { return g ? g->g.n() : 0; }
size_t exdiff_graph_edge_count(const exdiff_graph* g) { return g ? g->g.edges().size() : 0; }

exdiff_status exdiff_graph_edges(const exdiff_graph* g, size_t* edges) {
  if (!g || !edges) return bad_argument("NULL argument");
  for (size_t i = 0; i < g->g.edges().size(); ++i) {
    edges[2 * i] = g->g.edges()[i].first;
    edges[2 * i + 1] = g->g.edges()[i].second;
  }
  return EXDIFF_OK;
}

void exdiff_graph_destroy(exdiff_graph* g) { delete g; }

exdiff_status exdiff_matrix_metropolis(const exdiff_graph* g, exdiff_matrix** out) {
  if (!g || !out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_matrix{std::make_unique<exdiff::Network>(exdiff::build_metropolis(g->g))}; });
}

exdiff_status exdiff_matrix_averaging(const exdiff_graph* g, exdiff_matrix** out) {
  if (!g || !out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_matrix{std::make_unique<exdiff::Network>(exdiff::build_averaging(g->g))}; });
}

exdiff_status exdiff_matrix_from_dense(const exdiff_graph* g, const double* a, exdiff_matrix** out) {
  if (!g || !a || !out) return bad_argument("NULL argument");
  return guarded([&] {
    const auto n = static_cast<Eigen::Index>(g->g.n());
    Eigen::MatrixXd m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a, n, n);
    *out = new exdiff_matrix{std::make_unique<exdiff::Network>(exdiff::CombinationMatrix(g->g, m))};
  });
}

exdiff_status exdiff_matrix_load_csv(const exdiff_graph* g, const char* path, exdiff_matrix** out) {
  if (!g || !path || !out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_matrix{std::make_unique<exdiff::Network>(exdiff::CombinationMatrix::load_csv(g->g, path))}; });
}

exdiff_status exdiff_matrix_save_csv(const exdiff_matrix* m, const char* path) {
  if (!m || !path) return bad_argument("NULL argument");
  return guarded([&] { m->net->a.save_csv(path); });
}

size_t exdiff_matrix_size(const exdiff_matrix* m) { return m ? m->net->n() : 0; }

exdiff_status exdiff_matrix_dense(const exdiff_matrix* m, double* a) {
  if (!m || !a) return bad_argument("NULL argument");
  const auto n = static_cast<Eigen::Index>(m->net->n());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a, n, n) = m->net->a.a();
  return EXDIFF_OK;
}

exdiff_status exdiff_matrix_perron(const exdiff_matrix* m, double* p, double* lambda2, double* lambda_n, double* rho_a) {
  if (!m) return bad_argument("NULL argument");
  const auto& pd = m->net->perron();
  if (p)
    for (Eigen::Index i = 0; i < pd.p.size(); ++i) p[i] = pd.p(i);
  if (lambda2) *lambda2 = pd.lambda2;
  if (lambda_n) *lambda_n = pd.lambdaN;
  if (rho_a) *rho_a = pd.rhoA;
  return EXDIFF_OK;
}

exdiff_status exdiff_matrix_balanced(const exdiff_matrix* m, int* balanced, double* violation) {
  if (!m) return bad_argument("NULL argument");
  auto b = exdiff::check_balanced(m->net->a, m->net->perron());
  if (balanced) *balanced = b.balanced ? 1 : 0;
  if (violation) *violation = b.violation;
  return EXDIFF_OK;
}

void exdiff_matrix_destroy(exdiff_matrix* m) { delete m; }

exdiff_status exdiff_model_least_squares(uint64_t seed, size_t n_agents, size_t dim, size_t samples, exdiff_model** out) {
  if (!out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_model{exdiff::least_squares_model(seed, n_agents, dim, samples)}; });
}

exdiff_status exdiff_model_logistic(uint64_t seed, size_t n_agents, size_t dim, size_t samples, double ridge, double label_noise, exdiff_model** out) {
  if (!out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_model{exdiff::logistic_model(seed, n_agents, dim, samples, ridge, label_noise)}; });
}

exdiff_status exdiff_model_mse(size_t n_agents, size_t dim, const double* r, const double* cross, exdiff_model** out) {
  if (!r || !cross || !out) return bad_argument("NULL argument");
  return guarded([&] {
    const auto m = static_cast<Eigen::Index>(dim);
    std::vector<Eigen::MatrixXd> rs;
    std::vector<Eigen::VectorXd> cs;
    for (size_t k = 0; k < n_agents; ++k) {
      rs.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(r + k * dim * dim, m, m));
      cs.push_back(Eigen::Map<const Eigen::VectorXd>(cross + k * dim, m));
    }
    *out = new exdiff_model{exdiff::mse_quadratic_model(rs, cs)};
  });
}

exdiff_status exdiff_model_load(const char* path, exdiff_model** out) {
  if (!path || !out) return bad_argument("NULL argument");
  return guarded([&] { *out = new exdiff_model{exdiff::load_model(path)}; });
}

exdiff_status exdiff_model_save(const exdiff_model* model, const char* path) {
  if (!model || !path) return bad_argument("NULL argument");
  return guarded([&] { exdiff::save_model(*model->m, path); });
}

exdiff_status exdiff_model_set_weights(exdiff_model* model, const double* q) {
  if (!model || !q) return bad_argument("NULL argument");
  return guarded([&] { model->m = model->m->with_weights(Eigen::Map<const Eigen::VectorXd>(q, static_cast<Eigen::Index>(model->m->n_agents()))); });
}

size_t exdiff_model_agents(const exdiff_model* model) { return model ? model->m->n_agents() : 0; }
size_t exdiff_model_dim(const exdiff_model* model) { return model ? model->m->dim() : 0; }

exdiff_status exdiff_model_value(const exdiff_model* model, size_t agent, const double* w, double* value) {
  if (!model || !w || !value) return bad_argument("NULL argument");
  return guarded([&] { *value = model->m->value(agent, Eigen::Map<const Eigen::VectorXd>(w, static_cast<Eigen::Index>(model->m->dim()))); });
}

exdiff_status exdiff_model_gradient(const exdiff_model* model, size_t agent, const double* w, double* grad) {
  if (!model || !w || !grad) return bad_argument("NULL argument");
  return guarded([&] {
    const auto m = static_cast<Eigen::Index>(model->m->dim());
    Eigen::Map<Eigen::VectorXd>(grad, m) = model->m->gradient(agent, Eigen::Map<const Eigen::VectorXd>(w, m));
  });
}

exdiff_status exdiff_model_bounds(const exdiff_model* model, double* nu, double* delta, size_t* k_o) {
  if (!model) return bad_argument("NULL argument");
  return guarded([&] {
    auto hb = model->m->hessian_bounds();
    if (nu) *nu = hb.nu;
    if (delta) *delta = hb.delta;
    if (k_o) *k_o = hb.k_o;
  });
}

exdiff_status exdiff_model_solve(const exdiff_model* model, double* w_star, double* w_o, double* residual) {
  if (!model) return bad_argument("NULL argument");
  return guarded([&] {
    auto gt = exdiff::solve_centralized(*model->m);
    const auto m = gt.w_star.size();
    if (w_star) Eigen::Map<Eigen::VectorXd>(w_star, m) = gt.w_star;
    if (w_o) Eigen::Map<Eigen::VectorXd>(w_o, m) = gt.w_o;
    if (residual) *residual = gt.solver_residual;
  });
}

void exdiff_model_destroy(exdiff_model* model) { delete model; }

void exdiff_run_options_init(exdiff_run_options* options) {
  if (!options) return;
  options->engine = EXDIFF_EXACT_DIFFUSION;
  options->mu_scalar = 0.01;
  options->mu = nullptr;
  options->mu_o = 0.0;
  options->max_iters = 1000;
  options->stop_threshold = 1e-10;
  options->w0 = nullptr;
}

exdiff_status exdiff_run_create(const exdiff_model* model, const exdiff_matrix* matrix, const exdiff_run_options* options, exdiff_run** out) {
  if (!model || !matrix || !options || !out) return bad_argument("NULL argument");
  if (options->engine < EXDIFF_EXACT_DIFFUSION || options->engine > EXDIFF_AUG_DGM) return bad_argument("unknown engine");
  return guarded([&] {
    const auto& net = *matrix->net;
    const auto n = static_cast<Eigen::Index>(net.n());
    exdiff::RunOptions opt;
    opt.engine = static_cast<exdiff::EngineKind>(options->engine);
    if (opt.engine == exdiff::EngineKind::exact_diffusion_adaptive) {
      opt.steps = exdiff::StepSizes::from_q(model->m->q(), net.perron().p, options->mu_o);
    } else if (options->mu) {
      opt.steps.mu = Eigen::Map<const Eigen::VectorXd>(options->mu, n);
      opt.steps.mu_o = opt.steps.mu.maxCoeff();
      opt.steps.beta = 1.0 / opt.steps.mu_o;
    } else {
      opt.steps = exdiff::StepSizes::uniform(net.n(), options->mu_scalar);
    }
    opt.max_iters = options->max_iters;
    opt.stop_threshold = options->stop_threshold;
    if (options->w0)
      opt.w0 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(options->w0, n,
                                                                                                        static_cast<Eigen::Index>(model->m->dim()));
    *out = new exdiff_run{exdiff::run(*model->m, net, opt)};
  });
}

exdiff_run_status exdiff_run_result(const exdiff_run* r) {
  if (!r) return EXDIFF_RUN_EXHAUSTED;
  switch (r->r.status) {
    case exdiff::RunStatus::converged: return EXDIFF_RUN_CONVERGED;
    case exdiff::RunStatus::diverged: return EXDIFF_RUN_DIVERGED;
    default: return EXDIFF_RUN_EXHAUSTED;
  }
}

size_t exdiff_run_trace_length(const exdiff_run* r) { return r ? r->r.trace.size() : 0; }

exdiff_status exdiff_run_trace_record(const exdiff_run* r, size_t index, long* iteration, long* comm_units, double* rel_error, double* grad_norm) {
  if (!r) return bad_argument("NULL argument");
  if (index >= r->r.trace.size()) return bad_argument("trace index out of range");
  const auto& t = r->r.trace[index];
  if (iteration) *iteration = t.iteration;
  if (comm_units) *comm_units = t.comm_units;
  if (rel_error) *rel_error = t.rel_error;
  if (grad_norm) *grad_norm = t.grad_norm;
  return EXDIFF_OK;
}

exdiff_status exdiff_run_final_iterate(const exdiff_run* r, double* w) {
  if (!r || !w) return bad_argument("NULL argument");
  const auto& fw = r->r.final_state.w;
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w, fw.rows(), fw.cols()) = fw;
  return EXDIFF_OK;
}

exdiff_status exdiff_run_write(const exdiff_run* r, const char* csv_path, const char* status_path) {
  if (!r) return bad_argument("NULL argument");
  return guarded([&] {
    if (csv_path) exdiff::write_text_file(csv_path, exdiff::trace_csv(r->r.trace));
    if (status_path) exdiff::write_json_file(status_path, exdiff::status_json(r->r));
  });
}

void exdiff_run_destroy(exdiff_run* r) { delete r; }

exdiff_status exdiff_norm_comparison(const exdiff_matrix* m, double* t_d_norm2, double* t_e_norm2, double* closed_form) {
  if (!m) return bad_argument("NULL argument");
  return guarded([&] {
    auto nc = exdiff::norm_comparison(m->net->a);
    if (t_d_norm2) *t_d_norm2 = nc.t_d_norm2;
    if (t_e_norm2) *t_e_norm2 = nc.t_e_norm2;
    if (closed_form) *closed_form = nc.closed_form;
  });
}

namespace {
void fill_bound(const exdiff::StabilityBound& b, exdiff_bound* out) {
  out->mu_bound = b.mu_bound;
  out->alpha = b.alpha;
  out->lambda = b.lambda;
  out->rho = b.rho;
  out->c = b.c;
}
}  // namespace

exdiff_status exdiff_diffusion_bound(const exdiff_matrix* m, const double* tau, double nu, double delta, size_t k_o, exdiff_bound* out) {
  if (!m || !out) return bad_argument("NULL argument");
  return guarded([&] {
    const auto n = static_cast<Eigen::Index>(m->net->n());
    Eigen::VectorXd t = tau ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(tau, n)) : Eigen::VectorXd(Eigen::VectorXd::Ones(n));
    fill_bound(exdiff::diffusion_step_bound(*m->net, t, nu, delta, k_o), out);
  });
}

exdiff_status exdiff_extra_bound(const exdiff_matrix* m, double nu, double delta, exdiff_bound* out) {
  if (!m || !out) return bad_argument("NULL argument");
  return guarded([&] { fill_bound(exdiff::extra_step_bound(*m->net, nu, delta), out); });
}

exdiff_status exdiff_two_agent_case(double a, double sigma2, double mu, double mu_e, exdiff_two_agent* out) {
  if (!out) return bad_argument("NULL argument");
  return guarded([&] {
    auto tc = exdiff::two_agent_case(a, sigma2, mu, mu_e);
    out->spectral_radius_d = tc.radius_d;
    out->spectral_radius_e = tc.radius_e;
    out->delta_disc = tc.delta_disc;
    out->crosscheck_error = tc.crosscheck_error;
    out->diffusion_stable = tc.diffusion_stable;
    out->diffusion_sufficient = tc.diffusion_sufficient;
    out->extra_stable = tc.extra_stable;
    out->extra_predicted_unstable = tc.extra_predicted_unstable;
  });
}

exdiff_status exdiff_cmd_run(const char* config_path, const exdiff_command_options* options) {
  return run_command(config_path, options, [](const exdiff::ExperimentConfig& c) { exdiff::cmd_run(c); });
}

exdiff_status exdiff_cmd_stability_scan(const char* config_path, const exdiff_command_options* options) {
  return run_command(config_path, options, [](const exdiff::ExperimentConfig& c) { exdiff::cmd_stability_scan(c); });
}

exdiff_status exdiff_cmd_analyze(const char* config_path, const exdiff_command_options* options) {
  return run_command(config_path, options, [](const exdiff::ExperimentConfig& c) { exdiff::cmd_analyze(c); });
}

exdiff_status exdiff_cmd_two_agent(const char* config_path, const exdiff_command_options* options) {
  if (config_path) return run_command(config_path, options, [](const exdiff::ExperimentConfig& c) { exdiff::cmd_two_agent(c); });
  return guarded([&] { exdiff::cmd_two_agent(exdiff::parse_config(nlohmann::json::object(), "", overrides_from(options))); });
}

}  // extern "C"
