#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "algorithms.hpp"
#include "cost_models.hpp"
#include "graph.hpp"
#include "stability.hpp"

namespace exdiff {

struct Overrides {
  std::optional<std::string> out_dir;
  std::optional<std::int64_t> seed;
  int jobs = 1;
};

struct GraphSpec {
  std::string kind = "random";
  std::size_t n = 0;
  std::uint64_t seed = 1;
  double edge_probability = 0.3;
  std::string path;
};

struct MatrixSpec {
  std::string rule = "metropolis";
  std::string path;
  double a = 0.5;
};

struct TuneSpec {
  std::vector<double> grid;
  int refine = 0;
};

struct AlgorithmSpec {
  std::string label;
  EngineKind engine = EngineKind::exact_diffusion;
  std::optional<double> mu;
  std::optional<Eigen::VectorXd> mu_vector;
  std::optional<double> mu_o;
  std::optional<double> bound_fraction;
  std::optional<TuneSpec> tune;
};

struct ScanSpec {
  std::vector<double> mu_grid;
  std::vector<EngineKind> algorithms{EngineKind::exact_diffusion, EngineKind::extra};
  double refine_rel_tol = 1e-3;
  long max_iters = 5000;
  double stop_threshold = 1e-10;
};

struct TwoAgentSpec {
  double a = 0.5;
  double sigma2 = 1.0;
  double mu = 1.9;
  double mu_e = 1.9;
  long iterations = 20000;
  double stop_threshold = 1e-8;
  Eigen::VectorXd w_o = (Eigen::VectorXd(2) << 1.0, -1.0).finished();
};

struct NetworkSpec {
  std::string label;
  GraphSpec graph;
  MatrixSpec matrix;
};

struct ExperimentConfig {
  std::optional<nlohmann::json> model;
  NetworkSpec network;
  std::vector<AlgorithmSpec> algorithms;
  long max_iters = 10000;
  double stop_threshold = 1e-10;
  std::string output_dir = "out";
  std::optional<ScanSpec> scan;
  TwoAgentSpec two_agent;
  std::vector<NetworkSpec> analyze;
  int jobs = 1;
};

// Relative paths inside the document are resolved against base_dir.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& base_dir, const Overrides& overrides);
ExperimentConfig load_config(const std::string& path, const Overrides& overrides);

Graph build_graph(const GraphSpec& spec);
CombinationMatrix build_matrix(const Graph& graph, const MatrixSpec& spec);
StepSizes resolve_steps(const AlgorithmSpec& spec, const CostModel& model, const Network& net);

// Converged, or still shrinking at the end of the budget.
bool is_stable(const RunResult& r);

struct ScanPoint {
  double mu = 0.0;
  EngineKind engine = EngineKind::exact_diffusion;
  RunStatus status = RunStatus::exhausted;
  bool stable = false;
  bool refinement = false;
};

struct ScanSummary {
  EngineKind engine = EngineKind::exact_diffusion;
  double max_stable_mu = 0.0;
  std::optional<double> first_unstable_mu;
};

struct ScanResult {
  std::vector<ScanPoint> points;
  std::vector<ScanSummary> summaries;
};

ScanResult stability_scan(const CostModel& model, const Network& net, const ScanSpec& spec, int jobs = 1);

nlohmann::json analyze_network(const NetworkSpec& spec, const std::optional<HessianBounds>& bounds);
nlohmann::json two_agent_report(const TwoAgentSpec& spec, RunResult* diffusion = nullptr, RunResult* extra = nullptr);

void cmd_run(const ExperimentConfig& config);
void cmd_stability_scan(const ExperimentConfig& config);
void cmd_analyze(const ExperimentConfig& config);
void cmd_two_agent(const ExperimentConfig& config);

nlohmann::json status_json(const RunResult& r);

}  // namespace exdiff
