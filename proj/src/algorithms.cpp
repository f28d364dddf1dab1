#include "algorithms.hpp"

#include <cmath>
#include <sstream>

#include "io_util.hpp"

namespace exdiff {

std::string to_string(EngineKind kind) {
  switch (kind) {
    case EngineKind::exact_diffusion: return "exact_diffusion";
    case EngineKind::exact_diffusion_pd: return "exact_diffusion_pd";
    case EngineKind::exact_diffusion_adaptive: return "exact_diffusion_adaptive";
    case EngineKind::extra: return "extra";
    case EngineKind::diging: return "diging";
    case EngineKind::aug_dgm: return "aug_dgm";
  }
  return "unknown";
}

EngineKind engine_from_string(const std::string& name) {
  for (auto k : {EngineKind::exact_diffusion, EngineKind::exact_diffusion_pd, EngineKind::exact_diffusion_adaptive, EngineKind::extra, EngineKind::diging,
                 EngineKind::aug_dgm})
    if (to_string(k) == name) return k;
  fail(ErrorKind::configuration, "unknown algorithm '" + name + "'");
}

long comm_cost(EngineKind kind) {
  switch (kind) {
    case EngineKind::diging:
    case EngineKind::aug_dgm:
    case EngineKind::exact_diffusion_adaptive: return 2;
    default: return 1;
  }
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::exhausted: return "exhausted";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

StepSizes StepSizes::uniform(std::size_t n, double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) fail(ErrorKind::configuration, "step size must be positive");
  StepSizes s;
  s.mu = Eigen::VectorXd::Constant(n, mu);
  s.mu_o = mu;
  s.beta = 1.0 / mu;
  return s;
}

StepSizes StepSizes::from_q(const Eigen::VectorXd& q, const Eigen::VectorXd& p, double mu_o) {
  if (!(mu_o > 0.0) || !std::isfinite(mu_o)) fail(ErrorKind::configuration, "mu_o must be positive");
  if (q.size() != p.size()) fail(ErrorKind::configuration, "q and p lengths differ");
  if ((q.array() <= 0.0).any() || (p.array() <= 0.0).any()) fail(ErrorKind::configuration, "q and p must be positive");
  StepSizes s;
  s.mu = q.cwiseQuotient(p) * mu_o;
  s.mu_o = mu_o;
  s.beta = 1.0 / mu_o;
  return s;
}

Network::Network(CombinationMatrix matrix) : a(std::move(matrix)), a_bar(a.a_bar()) {
  if (check_balanced(a, a.perron()).balanced) {
    v = compute_v(a, a.perron());
    p_inv_v = a.perron().p.cwiseInverse().asDiagonal() * v->v;
  }
}

namespace {

void finish(AlgorithmState& s, long cost) {
  if (!s.w.allFinite()) throw DivergenceSignal(s.iteration + 1);
  ++s.iteration;
  s.comm_units += cost;
}

}  // namespace

void exact_diffusion_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const StepSizes& mu) {
  Eigen::MatrixXd psi = s.w - mu.mu.asDiagonal() * model.gradients(s.w);
  Eigen::MatrixXd phi = psi + s.w - s.psi_prev;
  s.w.noalias() = a_bar.transpose() * phi;
  s.psi_prev = std::move(psi);
  finish(s, 1);
}

void exact_diffusion_primal_dual_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const Eigen::MatrixXd& p_inv_v,
                                      const Eigen::MatrixXd& v, const StepSizes& mu) {
  Eigen::MatrixXd next = a_bar.transpose() * (s.w - mu.mu.asDiagonal() * model.gradients(s.w)) - p_inv_v * s.y;
  s.w = std::move(next);
  s.y.noalias() += v * s.w;
  finish(s, 1);
}

void exact_diffusion_adaptive_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_bar, double mu_o,
                                   const Eigen::VectorXd& q) {
  s.z = a.transpose() * s.z;
  Eigen::VectorXd own = s.z.diagonal();
  for (Eigen::Index k = 0; k < own.size(); ++k)
    if (!(own(k) > 0.0)) fail(ErrorKind::estimator, "Perron estimate of agent " + std::to_string(k) + " is not positive");
  StepSizes mu;
  mu.mu = q.cwiseQuotient(own) * mu_o;
  mu.mu_o = mu_o;
  mu.beta = 1.0 / mu_o;
  exact_diffusion_step(s, model, a_bar, mu);
  s.comm_units += 1;
}

void extra_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const Eigen::MatrixXd& p_inv_v, const Eigen::MatrixXd& v,
                double mu) {
  Eigen::MatrixXd next = a_bar * s.w - mu * model.gradients(s.w) - p_inv_v * s.y;
  s.w = std::move(next);
  s.y.noalias() += v * s.w;
  finish(s, 1);
}

void diging_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, double mu) {
  s.w = a.transpose() * s.w - mu * s.y;
  Eigen::MatrixXd g = model.gradients(s.w);
  s.y = a.transpose() * s.y + g - s.g_prev;
  s.g_prev = std::move(g);
  finish(s, 2);
}

void aug_dgm_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, const Eigen::VectorXd& mu) {
  s.w = a.transpose() * (s.w - mu.asDiagonal() * s.y);
  Eigen::MatrixXd g = model.gradients(s.w);
  s.y = a.transpose() * (s.y + g - s.g_prev);
  s.g_prev = std::move(g);
  finish(s, 2);
}

void check_engine_inputs(EngineKind kind, const CostModel& model, const Network& net, const StepSizes& steps) {
  const auto n = net.n();
  if (model.n_agents() != n)
    fail(ErrorKind::configuration, "model has " + std::to_string(model.n_agents()) + " agents but the network has " + std::to_string(n));
  if (static_cast<std::size_t>(steps.mu.size()) != n) fail(ErrorKind::configuration, "step-size vector length does not match the network");
  if (!steps.mu.allFinite() || (steps.mu.array() <= 0.0).any()) fail(ErrorKind::configuration, "step sizes must be positive");
  const std::string name = to_string(kind);
  switch (kind) {
    case EngineKind::exact_diffusion:
    case EngineKind::exact_diffusion_pd:
    case EngineKind::exact_diffusion_adaptive:
      if (!net.v) fail(ErrorKind::precondition, name + " needs a balanced combination matrix");
      if (kind == EngineKind::exact_diffusion_adaptive && !(steps.mu_o > 0.0)) fail(ErrorKind::configuration, name + " needs mu_o > 0");
      break;
    case EngineKind::extra:
      if (!net.a.symmetric(1e-12) || !net.a.doubly_stochastic()) fail(ErrorKind::configuration, name + " needs a symmetric doubly-stochastic matrix");
      if (!steps.is_uniform()) fail(ErrorKind::configuration, name + " needs a scalar step size");
      break;
    case EngineKind::diging:
      if (!net.a.doubly_stochastic()) fail(ErrorKind::configuration, name + " needs a doubly-stochastic matrix");
      if (!steps.is_uniform()) fail(ErrorKind::configuration, name + " needs a scalar step size");
      break;
    case EngineKind::aug_dgm:
      if (!net.a.doubly_stochastic()) fail(ErrorKind::configuration, name + " needs a doubly-stochastic matrix");
      break;
  }
}

AlgorithmState initial_state(EngineKind kind, const CostModel& model, const Network& net, const Eigen::MatrixXd& w0) {
  const auto n = static_cast<Eigen::Index>(net.n());
  const auto m = static_cast<Eigen::Index>(model.dim());
  if (w0.rows() != n || w0.cols() != m) fail(ErrorKind::configuration, "initial iterate must be N x M");
  AlgorithmState s;
  s.w = w0;
  switch (kind) {
    case EngineKind::exact_diffusion: s.psi_prev = w0; break;
    case EngineKind::exact_diffusion_adaptive:
      s.psi_prev = w0;
      s.z = Eigen::MatrixXd::Identity(n, n);
      break;
    case EngineKind::exact_diffusion_pd:
    case EngineKind::extra: s.y = Eigen::MatrixXd::Zero(n, m); break;
    case EngineKind::diging:
    case EngineKind::aug_dgm:
      s.g_prev = model.gradients(w0);
      s.y = s.g_prev;
      break;
  }
  return s;
}

void step(EngineKind kind, AlgorithmState& s, const CostModel& model, const Network& net, const StepSizes& steps) {
  switch (kind) {
    case EngineKind::exact_diffusion: exact_diffusion_step(s, model, net.a_bar, steps); break;
    case EngineKind::exact_diffusion_pd: exact_diffusion_primal_dual_step(s, model, net.a_bar, net.p_inv_v, net.v->v, steps); break;
    case EngineKind::exact_diffusion_adaptive: exact_diffusion_adaptive_step(s, model, net.a.a(), net.a_bar, steps.mu_o, model.q()); break;
    case EngineKind::extra: extra_step(s, model, net.a_bar, net.p_inv_v, net.v->v, steps.mu(0)); break;
    case EngineKind::diging: diging_step(s, model, net.a.a(), steps.mu(0)); break;
    case EngineKind::aug_dgm: aug_dgm_step(s, model, net.a.a(), steps.mu); break;
  }
}

Eigen::VectorXd limit_weights(EngineKind kind, const CostModel& model, const Network& net, const StepSizes& steps) {
  switch (kind) {
    case EngineKind::exact_diffusion:
    case EngineKind::exact_diffusion_pd: return net.perron().p.cwiseProduct(steps.mu) * static_cast<double>(net.n()) / steps.mu.maxCoeff();
    case EngineKind::exact_diffusion_adaptive: return model.q();
    default: return Eigen::VectorXd::Ones(net.n());
  }
}

RunResult run(const CostModel& model, const Network& net, const RunOptions& options) {
  check_engine_inputs(options.engine, model, net, options.steps);
  const auto n = static_cast<Eigen::Index>(net.n());
  const auto m = static_cast<Eigen::Index>(model.dim());
  RunResult result;
  if (options.target) {
    if (options.target->size() != m) fail(ErrorKind::configuration, "target has the wrong dimension");
    result.target = *options.target;
  } else {
    result.target = solve_centralized(*model.with_weights(limit_weights(options.engine, model, net, options.steps))).w_star;
  }
  const Eigen::MatrixXd w_star = Eigen::VectorXd::Ones(n) * result.target.transpose();
  const Eigen::MatrixXd w0 = options.w0 ? *options.w0 : Eigen::MatrixXd::Zero(n, m);
  const double base = (w0 - w_star).squaredNorm();
  auto rel_error = [&](const Eigen::MatrixXd& w) {
    double e = (w - w_star).squaredNorm();
    return base > 0.0 ? e / base : e;
  };
  auto record = [&](const AlgorithmState& s) {
    TraceRecord r;
    r.iteration = s.iteration;
    r.comm_units = s.comm_units;
    r.rel_error = rel_error(s.w);
    Eigen::VectorXd avg = s.w.colwise().mean().transpose();
    r.grad_norm = avg.allFinite() ? model.weighted_gradient(avg, model.q()).norm() : std::numeric_limits<double>::infinity();
    result.trace.push_back(r);
    return r;
  };

  AlgorithmState s = initial_state(options.engine, model, net, w0);
  if (options.observer) options.observer(s);
  auto r = record(s);
  result.status = RunStatus::exhausted;
  if (r.rel_error <= options.stop_threshold) result.status = RunStatus::converged;
  while (result.status == RunStatus::exhausted && s.iteration < options.max_iters) {
    try {
      step(options.engine, s, model, net, options.steps);
    } catch (const DivergenceSignal&) {
      result.status = RunStatus::diverged;
      TraceRecord bad{s.iteration + 1, s.comm_units + comm_cost(options.engine), std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
      result.trace.push_back(bad);
      break;
    }
    if (options.record_perron && s.z.size() > 0) result.perron_estimates.push_back(s.z.diagonal());
    if (options.observer) options.observer(s);
    r = record(s);
    if (!std::isfinite(r.rel_error) || r.rel_error > 1e12) result.status = RunStatus::diverged;
    else if (r.rel_error <= options.stop_threshold) result.status = RunStatus::converged;
  }
  result.iterations = result.trace.back().iteration;
  result.final_rel_error = result.trace.back().rel_error;
  result.final_state = std::move(s);
  return result;
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::string out = "iter,comm_units,rel_error,grad_norm\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',' + std::to_string(r.comm_units) + ',' + format_double(r.rel_error) + ',' + format_double(r.grad_norm) + '\n';
  }
  return out;
}

std::vector<TraceRecord> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "iter,comm_units,rel_error,grad_norm") fail(ErrorKind::configuration, "trace header mismatch");
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell[4];
    for (auto& c : cell)
      if (!std::getline(ls, c, ',')) fail(ErrorKind::configuration, "short trace row: " + line);
    try {
      out.push_back({std::stol(cell[0]), std::stol(cell[1]), std::stod(cell[2]), std::stod(cell[3])});
    } catch (const std::exception&) {
      fail(ErrorKind::configuration, "bad trace row: " + line);
    }
  }
  return out;
}

}  // namespace exdiff
