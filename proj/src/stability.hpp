#pragma once

#include <array>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "algorithms.hpp"
#include "cost_models.hpp"
#include "graph.hpp"
#include "spectral.hpp"

namespace exdiff {

Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, Eigen::Index m);

// Scalar (2N) blocks plus the M-lifted recursion matrices.
struct ErrorDynamics {
  Eigen::MatrixXd b;
  Eigen::MatrixXd t_d;
  Eigen::MatrixXd t_e;
  Eigen::MatrixXd h;
  Eigen::MatrixXd b_lifted;
  Eigen::MatrixXd t;
  std::size_t n = 0;
  std::size_t m = 1;

  Eigen::MatrixXd transition() const { return b_lifted - t; }
};

// Hessians are evaluated at `point` (defaults to the minimizer for non-quadratic models).
ErrorDynamics build_error_dynamics(const Network& net, const CostModel& model, const StepSizes& mu,
                                   const std::optional<Eigen::VectorXd>& point = std::nullopt);
ErrorDynamics build_extra_error_dynamics(const Network& net, const CostModel& model, double mu,
                                         const std::optional<Eigen::VectorXd>& point = std::nullopt);
ErrorDynamics build_error_dynamics(const Network& net);

Eigen::MatrixXd optimal_dual_diffusion(const Network& net, const CostModel& model, const StepSizes& mu, const Eigen::VectorXd& w_star);
Eigen::MatrixXd optimal_dual_extra(const Network& net, const CostModel& model, double mu, const Eigen::VectorXd& w_star);

// Row-major stacking of the N x M error blocks into one 2NM vector.
Eigen::VectorXd stack_error(const Eigen::MatrixXd& w_err, const Eigen::MatrixXd& y_err);

std::vector<Eigen::VectorXd> simulate_error_recursion(const ErrorDynamics& dyn, const Eigen::VectorXd& initial, long iterations);

// Spectral radius of the transition restricted to the invariant subspace where the dual errors sum to zero.
double restricted_spectral_radius(const Eigen::MatrixXd& transition, std::size_t n, std::size_t m);

struct SpectralPair {
  Eigen::VectorXcd d;
  Eigen::MatrixXcd x;
  Eigen::MatrixXcd x_inv;
  double c = 1.0;
  Eigen::MatrixXcd x_r;
  Eigen::MatrixXcd x_l;
  double canonical_error = 0.0;
  double inverse_error = 0.0;
  double reconstruction_error = 0.0;
};

SpectralPair decompose_b(const ErrorDynamics& dyn, const Eigen::VectorXd& p, std::optional<double> c = std::nullopt);

struct StructureCheck {
  double multiset_error = 0.0;
  double canonical_error = 0.0;
  double r_error = 0.0;
  double reconstruction_error = 0.0;
  bool v_prime_full_rank = false;
  bool multiset_ok = false;
  bool canonical_ok = false;
};

StructureCheck check_b_structure(const Network& net);

struct StabilityBound {
  double mu_bound = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double sigma11 = 0.0;
  double sigma12 = 0.0;
  double sigma21 = 0.0;
  double sigma22 = 0.0;
  double c = 1.0;
  double rho = 0.0;
  double mu_max = 0.0;
  double p_max = 0.0;
  double delta = 0.0;
  double norm_t = 0.0;
  double norm_xl = 0.0;
  double norm_xr = 0.0;

  double rate(double mu) const;
};

StabilityBound diffusion_step_bound(const Network& net, const Eigen::VectorXd& tau, double nu, double delta, std::size_t k_o,
                                    std::optional<double> mu_max = std::nullopt);
StabilityBound extra_step_bound(const Network& net, double nu, double delta, std::optional<double> mu_max = std::nullopt);

struct NormComparison {
  double t_d_norm2 = 0.0;
  double t_e_norm2 = 0.0;
  double closed_form = 0.0;
  double residual = 0.0;
  bool strict = false;
};

NormComparison norm_comparison(const Eigen::MatrixXd& a);
inline NormComparison norm_comparison(const CombinationMatrix& a) { return norm_comparison(a.a()); }

struct TwoAgentCase {
  double a = 0.5;
  double sigma2 = 1.0;
  double mu = 0.0;
  double mu_e = 0.0;
  Eigen::Matrix3d e_d;
  Eigen::Matrix3d e_e;
  double delta_disc = 0.0;
  double delta_disc_extra = 0.0;
  std::array<std::complex<double>, 3> eig_d;
  std::array<std::complex<double>, 3> eig_e;
  std::array<std::complex<double>, 2> roots_d;
  std::array<std::complex<double>, 2> roots_e;
  double radius_d = 0.0;
  double radius_e = 0.0;
  double crosscheck_error = 0.0;
  bool diffusion_stable = false;
  bool diffusion_sufficient = false;
  bool extra_stable = false;
  bool extra_predicted_unstable = false;
};

TwoAgentCase two_agent_case(double a, double sigma2, double mu, double mu_e);

// Closed-form onset of EXTRA instability for the two-agent family (root at -1).
inline double two_agent_extra_onset(double a, double sigma2) { return (1.0 + 3.0 * a) / (2.0 * sigma2); }

struct MismatchCheck {
  bool holds = false;
  double max_ratio = 0.0;
  double fitted_rate = 0.0;
  long worst_iteration = -1;
};

// Compares |z_{k,i}(k) - p_k| against sqrt(h) rho^(i+1); errors below `floor` are treated as rounding.
MismatchCheck mismatch_decay_check(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& p, double rho_a, double h,
                                   double floor = 64.0 * std::numeric_limits<double>::epsilon());

}  // namespace exdiff
