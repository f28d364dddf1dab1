#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cost_models.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "spectral.hpp"

namespace exdiff {

enum class EngineKind { exact_diffusion, exact_diffusion_pd, exact_diffusion_adaptive, extra, diging, aug_dgm };

std::string to_string(EngineKind kind);
EngineKind engine_from_string(const std::string& name);
// Communication units charged per iteration.
long comm_cost(EngineKind kind);

struct StepSizes {
  Eigen::VectorXd mu;
  double mu_o = 0.0;
  double beta = 0.0;

  static StepSizes uniform(std::size_t n, double mu);
  // mu_k = q_k mu_o / p_k and beta = 1 / mu_o.
  static StepSizes from_q(const Eigen::VectorXd& q, const Eigen::VectorXd& p, double mu_o);
  double max() const { return mu.maxCoeff(); }
  bool is_uniform() const { return mu.size() > 0 && mu.maxCoeff() == mu.minCoeff(); }
};

// Rows are agents.
struct AlgorithmState {
  Eigen::MatrixXd w;
  Eigen::MatrixXd psi_prev;
  Eigen::MatrixXd y;
  Eigen::MatrixXd g_prev;
  Eigen::MatrixXd z;
  long iteration = 0;
  long comm_units = 0;
};

class DivergenceSignal : public Error {
 public:
  explicit DivergenceSignal(long iteration)
      : Error(ErrorKind::convergence, "non-finite iterate at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// Combination matrix with the derived quantities the engines need.
struct Network {
  CombinationMatrix a;
  Eigen::MatrixXd a_bar;
  std::optional<VMatrix> v;
  Eigen::MatrixXd p_inv_v;

  explicit Network(CombinationMatrix matrix);
  const PerronData& perron() const { return a.perron(); }
  std::size_t n() const { return a.n(); }
};

void exact_diffusion_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const StepSizes& mu);
void exact_diffusion_primal_dual_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const Eigen::MatrixXd& p_inv_v,
                                      const Eigen::MatrixXd& v, const StepSizes& mu);
void exact_diffusion_adaptive_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, const Eigen::MatrixXd& a_bar, double mu_o,
                                   const Eigen::VectorXd& q);
void extra_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a_bar, const Eigen::MatrixXd& p_inv_v, const Eigen::MatrixXd& v,
                double mu);
void diging_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, double mu);
void aug_dgm_step(AlgorithmState& s, const CostModel& model, const Eigen::MatrixXd& a, const Eigen::VectorXd& mu);

void check_engine_inputs(EngineKind kind, const CostModel& model, const Network& net, const StepSizes& steps);
AlgorithmState initial_state(EngineKind kind, const CostModel& model, const Network& net, const Eigen::MatrixXd& w0);
void step(EngineKind kind, AlgorithmState& s, const CostModel& model, const Network& net, const StepSizes& steps);

// Weights whose minimizer the engine converges to.
Eigen::VectorXd limit_weights(EngineKind kind, const CostModel& model, const Network& net, const StepSizes& steps);

struct TraceRecord {
  long iteration = 0;
  long comm_units = 0;
  double rel_error = 0.0;
  double grad_norm = 0.0;
};

enum class RunStatus { converged, exhausted, diverged };
std::string to_string(RunStatus status);

struct RunOptions {
  EngineKind engine = EngineKind::exact_diffusion;
  StepSizes steps;
  long max_iters = 1000;
  double stop_threshold = 1e-10;
  std::optional<Eigen::MatrixXd> w0;
  std::optional<Eigen::VectorXd> target;
  bool record_perron = false;
  std::function<void(const AlgorithmState&)> observer;
};

struct RunResult {
  std::vector<TraceRecord> trace;
  RunStatus status = RunStatus::exhausted;
  long iterations = 0;
  double final_rel_error = 0.0;
  Eigen::VectorXd target;
  AlgorithmState final_state;
  std::vector<Eigen::VectorXd> perron_estimates;
};

RunResult run(const CostModel& model, const Network& net, const RunOptions& options);

std::string trace_csv(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> parse_trace_csv(const std::string& text);

}  // namespace exdiff
