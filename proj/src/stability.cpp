#include "stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"

namespace exdiff {

namespace {

using cd = std::complex<double>;

double match_multisets(std::vector<cd> expected, std::vector<cd> actual) {
  if (expected.size() != actual.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  std::vector<bool> used(actual.size(), false);
  for (const auto& e : expected) {
    std::size_t best = actual.size();
    for (std::size_t j = 0; j < actual.size(); ++j)
      if (!used[j] && (best == actual.size() || std::abs(actual[j] - e) < std::abs(actual[best] - e))) best = j;
    used[best] = true;
    worst = std::max(worst, std::abs(actual[best] - e));
  }
  return worst;
}

Eigen::MatrixXd block2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c, const Eigen::MatrixXd& d) {
  Eigen::MatrixXd out(a.rows() + c.rows(), a.cols() + b.cols());
  out << a, b, c, d;
  return out;
}

Eigen::MatrixXd hessian_blocks(const CostModel& model, const Eigen::VectorXd& point) {
  const auto n = static_cast<Eigen::Index>(model.n_agents());
  const auto m = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n * m, n * m);
  for (Eigen::Index k = 0; k < n; ++k) h.block(k * m, k * m, m, m) = model.hessian(k, point);
  return h;
}

Eigen::VectorXd evaluation_point(const Network& net, const CostModel& model, const StepSizes& mu, EngineKind kind,
                                 const std::optional<Eigen::VectorXd>& point) {
  if (point) {
    if (static_cast<std::size_t>(point->size()) != model.dim()) fail(ErrorKind::configuration, "evaluation point has the wrong dimension");
    return *point;
  }
  if (model.constant_hessian()) return Eigen::VectorXd::Zero(model.dim());
  return solve_centralized(*model.with_weights(limit_weights(kind, model, net, mu))).w_star;
}

void check_model(const Network& net, const CostModel& model) {
  if (!net.v) fail(ErrorKind::precondition, "error dynamics need a balanced combination matrix");
  if (model.n_agents() != net.n()) fail(ErrorKind::configuration, "model and network sizes differ");
}

}  // namespace

Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& a, Eigen::Index m) {
  if (m == 1) return a;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() * m, a.cols() * m);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) out.block(i * m, j * m, m, m).diagonal().setConstant(a(i, j));
  return out;
}

ErrorDynamics build_error_dynamics(const Network& net) {
  if (!net.v) fail(ErrorKind::precondition, "error dynamics need a balanced combination matrix");
  const auto n = static_cast<Eigen::Index>(net.n());
  const Eigen::MatrixXd& v = net.v->v;
  const Eigen::MatrixXd at = net.a_bar.transpose();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  ErrorDynamics dyn;
  dyn.n = net.n();
  dyn.m = 1;
  dyn.b = block2(at, -net.p_inv_v, v * at, id - v * net.p_inv_v);
  dyn.t_d = block2(at, zero, v * at, zero);
  dyn.t_e = block2(id, zero, v, zero);
  dyn.h = Eigen::MatrixXd::Zero(n, n);
  dyn.b_lifted = dyn.b;
  dyn.t = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  return dyn;
}

ErrorDynamics build_error_dynamics(const Network& net, const CostModel& model, const StepSizes& mu, const std::optional<Eigen::VectorXd>& point) {
  check_model(net, model);
  if (static_cast<std::size_t>(mu.mu.size()) != net.n()) fail(ErrorKind::configuration, "step-size vector length does not match the network");
  ErrorDynamics dyn = build_error_dynamics(net);
  const auto n = static_cast<Eigen::Index>(net.n());
  const auto m = static_cast<Eigen::Index>(model.dim());
  dyn.m = model.dim();
  dyn.h = hessian_blocks(model, evaluation_point(net, model, mu, EngineKind::exact_diffusion, point));
  dyn.b_lifted = kron_identity(dyn.b, m);
  Eigen::MatrixXd mh = kron_identity(Eigen::MatrixXd(mu.mu.asDiagonal()), m) * dyn.h;
  Eigen::MatrixXd top = kron_identity(net.a_bar.transpose(), m) * mh;
  Eigen::MatrixXd bottom = kron_identity(net.v->v, m) * top;
  dyn.t = Eigen::MatrixXd::Zero(2 * n * m, 2 * n * m);
  dyn.t.block(0, 0, n * m, n * m) = top;
  dyn.t.block(n * m, 0, n * m, n * m) = bottom;
  return dyn;
}

ErrorDynamics build_extra_error_dynamics(const Network& net, const CostModel& model, double mu, const std::optional<Eigen::VectorXd>& point) {
  check_model(net, model);
  ErrorDynamics dyn = build_error_dynamics(net);
  const auto n = static_cast<Eigen::Index>(net.n());
  const auto m = static_cast<Eigen::Index>(model.dim());
  const Eigen::MatrixXd& v = net.v->v;
  dyn.b = block2(net.a_bar, -net.p_inv_v, v * net.a_bar, Eigen::MatrixXd::Identity(n, n) - v * net.p_inv_v);
  dyn.m = model.dim();
  dyn.h = hessian_blocks(model, evaluation_point(net, model, StepSizes::uniform(net.n(), mu), EngineKind::extra, point));
  dyn.b_lifted = kron_identity(dyn.b, m);
  Eigen::MatrixXd top = mu * dyn.h;
  dyn.t = Eigen::MatrixXd::Zero(2 * n * m, 2 * n * m);
  dyn.t.block(0, 0, n * m, n * m) = top;
  dyn.t.block(n * m, 0, n * m, n * m) = kron_identity(v, m) * top;
  return dyn;
}

Eigen::MatrixXd optimal_dual_diffusion(const Network& net, const CostModel& model, const StepSizes& mu, const Eigen::VectorXd& w_star) {
  check_model(net, model);
  const auto n = static_cast<Eigen::Index>(net.n());
  Eigen::MatrixXd g = model.gradients(Eigen::VectorXd::Ones(n) * w_star.transpose());
  Eigen::MatrixXd rhs = net.perron().p.asDiagonal() * (net.a_bar.transpose() * (mu.mu.asDiagonal() * g));
  return -v_pseudo_inverse(*net.v) * rhs;
}

Eigen::MatrixXd optimal_dual_extra(const Network& net, const CostModel& model, double mu, const Eigen::VectorXd& w_star) {
  check_model(net, model);
  const auto n = static_cast<Eigen::Index>(net.n());
  Eigen::MatrixXd g = model.gradients(Eigen::VectorXd::Ones(n) * w_star.transpose());
  return -mu * v_pseudo_inverse(*net.v) * (net.perron().p.asDiagonal() * g);
}

Eigen::VectorXd stack_error(const Eigen::MatrixXd& w_err, const Eigen::MatrixXd& y_err) {
  const auto n = w_err.rows(), m = w_err.cols();
  Eigen::VectorXd out(2 * n * m);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < m; ++j) {
      out(k * m + j) = w_err(k, j);
      out(n * m + k * m + j) = y_err(k, j);
    }
  return out;
}

std::vector<Eigen::VectorXd> simulate_error_recursion(const ErrorDynamics& dyn, const Eigen::VectorXd& initial, long iterations) {
  const Eigen::MatrixXd f = dyn.transition();
  if (initial.size() != f.cols()) fail(ErrorKind::configuration, "initial error has dimension " + std::to_string(initial.size()) + ", expected " + std::to_string(f.cols()));
  std::vector<Eigen::VectorXd> out;
  out.reserve(iterations + 1);
  out.push_back(initial);
  for (long i = 0; i < iterations; ++i) out.push_back(f * out.back());
  return out;
}

double restricted_spectral_radius(const Eigen::MatrixXd& transition, std::size_t n, std::size_t m) {
  const auto dim = static_cast<Eigen::Index>(2 * n * m);
  if (transition.rows() != dim || transition.cols() != dim) fail(ErrorKind::configuration, "transition matrix has the wrong size");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dim, m);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < m; ++j) c(n * m + k * m + j, j) = 1.0;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::MatrixXd basis = q.rightCols(dim - static_cast<Eigen::Index>(m));
  Eigen::MatrixXd reduced = basis.transpose() * transition * basis;
  if (reduced.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(reduced, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::spectral, "eigensolver failed on the reduced transition matrix");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SpectralPair decompose_b(const ErrorDynamics& dyn, const Eigen::VectorXd& p, std::optional<double> c) {
  const auto n = static_cast<Eigen::Index>(dyn.n);
  if (dyn.b.rows() != 2 * n || p.size() != n) fail(ErrorKind::configuration, "decompose_b size mismatch");
  const Eigen::MatrixXcd bc = dyn.b.cast<cd>();
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(2 * n, 2);
  r.block(0, 0, n, 1).setOnes();
  r.block(n, 1, n, 1).setOnes();
  Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(2, 2 * n);
  l.block(0, 0, 1, n) = p.transpose().cast<cd>();
  l.block(1, n, 1, n).setConstant(1.0 / static_cast<double>(n));

  SpectralPair sp;
  std::vector<Eigen::Index> rest;
  Eigen::VectorXcd vals;
  Eigen::MatrixXcd vecs;
  if (n > 1) {
    auto eig = general_eig(dyn.b);
    std::vector<Eigen::Index> unit;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
      if (std::abs(eig.values(i) - 1.0) <= 1e-6) unit.push_back(i);
      else rest.push_back(i);
    }
    if (unit.size() != 2)
      fail(ErrorKind::structure, "B has " + std::to_string(unit.size()) + " eigenvalues at 1, expected exactly 2 (non-primitive or unbalanced input)");
    vals = eig.values;
    vecs = eig.right;
  }
  const auto k = static_cast<Eigen::Index>(rest.size());
  sp.d.resize(2 + k);
  sp.d(0) = 1.0;
  sp.d(1) = 1.0;
  sp.x_r.resize(2 * n, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    sp.d(2 + i) = vals(rest[i]);
    sp.x_r.col(i) = vecs.col(rest[i]);
  }
  Eigen::MatrixXcd x(2 * n, 2 * n);
  x << r, sp.x_r;
  Eigen::MatrixXcd x_inv = x.fullPivLu().inverse();
  sp.canonical_error = (x_inv.topRows(2) - l).cwiseAbs().maxCoeff();
  sp.x_l = x_inv.bottomRows(k);

  if (c) {
    if (!(*c > 0.0)) fail(ErrorKind::configuration, "scaling constant c must be positive");
    sp.c = *c;
  } else if (k > 0) {
    const double p_max = p.maxCoeff();
    sp.c = std::sqrt(std::sqrt(p_max) * spectral_norm(sp.x_r) / (spectral_norm(sp.x_l) * spectral_norm(dyn.t_d)));
  }
  sp.x.resize(2 * n, 2 * n);
  sp.x << r, sp.x_r / sp.c;
  sp.x_inv.resize(2 * n, 2 * n);
  sp.x_inv << x_inv.topRows(2), sp.c * sp.x_l;
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(2 * n, 2 * n);
  sp.inverse_error = (sp.x * sp.x_inv - id).cwiseAbs().maxCoeff();
  sp.reconstruction_error = (sp.x * sp.d.asDiagonal() * sp.x_inv - bc).cwiseAbs().maxCoeff();
  return sp;
}

StructureCheck check_b_structure(const Network& net) {
  StructureCheck out;
  auto dyn = build_error_dynamics(net);
  const auto n = static_cast<Eigen::Index>(net.n());
  const auto& p = net.perron().p;
  auto sp = decompose_b(dyn, p);
  std::vector<cd> expected{1.0, 1.0};
  const auto& ev = net.perron().eigenvalues;
  for (Eigen::Index i = 1; i < ev.size(); ++i) {
    double lb = 0.5 * (1.0 + ev(i).real());
    double im = std::sqrt(std::max(0.0, lb * (1.0 - lb)));
    expected.emplace_back(lb, im);
    expected.emplace_back(lb, -im);
  }
  std::vector<cd> actual(sp.d.data(), sp.d.data() + sp.d.size());
  if (n > 1) {
    auto eig = general_eig(dyn.b);
    actual.assign(eig.values.data(), eig.values.data() + eig.values.size());
  }
  out.multiset_error = match_multisets(expected, actual);
  out.canonical_error = sp.canonical_error;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2 * n, 2);
  r.block(0, 0, n, 1).setOnes();
  r.block(n, 1, n, 1).setOnes();
  out.r_error = (dyn.b * r - r).cwiseAbs().maxCoeff();
  out.reconstruction_error = sp.reconstruction_error;
  Eigen::MatrixXd v_prime = net.v->v + Eigen::VectorXd::Ones(n) * p.transpose();
  out.v_prime_full_rank = Eigen::JacobiSVD<Eigen::MatrixXd>(v_prime).singularValues().minCoeff() > 1e-10;
  out.multiset_ok = out.multiset_error <= 1e-8;
  out.canonical_ok = out.canonical_error <= 1e-10 && out.r_error <= 1e-10;
  return out;
}

double StabilityBound::rate(double mu) const {
  const double d2 = delta * delta;
  const double gap = 1.0 - lambda;
  const double first = 1.0 - sigma11 * mu + 2.0 * std::sqrt(p_max) * alpha * d2 * mu * mu / gap;
  const double second = lambda + std::sqrt(p_max) * alpha * d2 * mu / sigma11 + 2.0 * alpha * alpha * d2 * mu * mu / gap;
  return std::max(first, second);
}

namespace {

StabilityBound assemble_bound(const Network& net, const Eigen::MatrixXd& t_const, double sigma11, double delta, std::optional<double> mu_max) {
  if (net.n() < 2) fail(ErrorKind::precondition, "step-size bounds are undefined for a single agent");
  if (!(delta > 0.0) || !(sigma11 > 0.0)) fail(ErrorKind::precondition, "nu and delta must be positive");
  auto dyn = build_error_dynamics(net);
  dyn.t_d = t_const;
  auto sp = decompose_b(dyn, net.perron().p);
  StabilityBound b;
  b.p_max = net.perron().p.maxCoeff();
  b.delta = delta;
  b.norm_t = spectral_norm(t_const);
  b.norm_xl = spectral_norm(sp.x_l);
  b.norm_xr = spectral_norm(sp.x_r);
  b.alpha = b.norm_xl * b.norm_t * b.norm_xr;
  b.lambda = std::sqrt(0.5 * (1.0 + net.perron().lambda2));
  b.c = sp.c;
  b.sigma11 = sigma11;
  b.sigma12 = std::sqrt(b.p_max) * delta * b.norm_xr / b.c;
  b.sigma21 = b.c * b.norm_xl * b.norm_t * delta;
  b.sigma22 = b.alpha * delta;
  b.mu_bound = sigma11 * (1.0 - b.lambda) / (2.0 * std::sqrt(b.p_max) * b.alpha * delta * delta);
  b.mu_max = mu_max.value_or(b.mu_bound);
  b.rho = b.rate(b.mu_max);
  return b;
}

}  // namespace

StabilityBound diffusion_step_bound(const Network& net, const Eigen::VectorXd& tau, double nu, double delta, std::size_t k_o,
                                    std::optional<double> mu_max) {
  if (!net.v) fail(ErrorKind::precondition, "diffusion bound needs a balanced combination matrix");
  if (static_cast<std::size_t>(tau.size()) != net.n() || k_o >= net.n()) fail(ErrorKind::configuration, "tau/k_o do not match the network");
  if ((tau.array() <= 0.0).any() || tau.maxCoeff() > 1.0 + 1e-12) fail(ErrorKind::configuration, "tau entries must lie in (0, 1]");
  const double sigma11 = net.perron().p(k_o) * tau(k_o) * nu;
  return assemble_bound(net, build_error_dynamics(net).t_d, sigma11, delta, mu_max);
}

StabilityBound extra_step_bound(const Network& net, double nu, double delta, std::optional<double> mu_max) {
  if (!net.a.symmetric(1e-12) || !net.a.doubly_stochastic()) fail(ErrorKind::precondition, "EXTRA bound needs a symmetric doubly-stochastic matrix");
  const double sigma11 = nu / static_cast<double>(net.n());
  return assemble_bound(net, build_error_dynamics(net).t_e, sigma11, delta, mu_max);
}

NormComparison norm_comparison(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  if (n == 0 || a.cols() != n) fail(ErrorKind::precondition, "norm comparison needs a square matrix");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 || (a.colwise().sum().array() - 1.0).abs().maxCoeff() > 1e-12)
    fail(ErrorKind::precondition, "norm comparison needs a symmetric doubly-stochastic matrix");
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const auto v = compute_v(a, p).v;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd a_bar = 0.5 * (id + a);
  NormComparison out;
  const double td = spectral_norm(block2(a_bar, zero, v * a_bar, zero));
  const double te = spectral_norm(block2(id, zero, v, zero));
  out.t_d_norm2 = td * td;
  out.t_e_norm2 = te * te;
  const double lambda_n = symmetric_eig(a).values(n - 1);
  out.closed_form = (2.0 * static_cast<double>(n) + 1.0 - lambda_n) / (2.0 * static_cast<double>(n));
  out.residual = std::abs(out.t_e_norm2 - out.closed_form);
  out.strict = out.t_d_norm2 < out.t_e_norm2;
  return out;
}

TwoAgentCase two_agent_case(double a, double sigma2, double mu, double mu_e) {
  if (!(a > 0.0 && a < 1.0)) fail(ErrorKind::configuration, "two-agent weight a must lie in (0, 1)");
  if (!(sigma2 > 0.0)) fail(ErrorKind::configuration, "sigma2 must be positive");
  if (!(mu > 0.0) || !(mu_e > 0.0)) fail(ErrorKind::configuration, "step sizes must be positive");
  TwoAgentCase tc;
  tc.a = a;
  tc.sigma2 = sigma2;
  tc.mu = mu;
  tc.mu_e = mu_e;
  const double x = mu * sigma2, xe = mu_e * sigma2;
  const double s = std::sqrt(2.0 - 2.0 * a), t = std::sqrt((1.0 - a) / 2.0);
  tc.e_d << 1.0 - x, 0.0, 0.0, 0.0, (1.0 - x) * a, -s, 0.0, (1.0 - x) * a * t, a;
  tc.e_e << 1.0 - xe, 0.0, 0.0, 0.0, a - xe, -s, 0.0, (a - xe) * t, a;
  tc.delta_disc = (2.0 - x) * (2.0 - x) * a * a - 4.0 * (1.0 - x) * a;
  tc.delta_disc_extra = (2.0 * a - xe) * (2.0 * a - xe) - 4.0 * (a - xe);
  auto roots = [](double tr, double det) {
    cd disc = std::sqrt(cd(tr * tr - 4.0 * det, 0.0));
    return std::array<cd, 2>{(tr + disc) / 2.0, (tr - disc) / 2.0};
  };
  tc.roots_d = roots((2.0 - x) * a, (1.0 - x) * a);
  tc.roots_e = roots(2.0 * a - xe, a - xe);
  auto ed = general_eig(tc.e_d);
  auto ee = general_eig(tc.e_e);
  for (int i = 0; i < 3; ++i) {
    tc.eig_d[i] = ed.values(i);
    tc.eig_e[i] = ee.values(i);
  }
  tc.crosscheck_error = std::max(match_multisets({1.0 - x, tc.roots_d[0], tc.roots_d[1]}, {tc.eig_d.begin(), tc.eig_d.end()}),
                                 match_multisets({1.0 - xe, tc.roots_e[0], tc.roots_e[1]}, {tc.eig_e.begin(), tc.eig_e.end()}));
  for (int i = 0; i < 3; ++i) {
    tc.radius_d = std::max(tc.radius_d, std::abs(tc.eig_d[i]));
    tc.radius_e = std::max(tc.radius_e, std::abs(tc.eig_e[i]));
  }
  tc.diffusion_stable = tc.radius_d < 1.0;
  tc.diffusion_sufficient = x > 0.0 && x < 2.0;
  tc.extra_stable = tc.radius_e < 1.0;
  tc.extra_predicted_unstable = xe >= a + 1.0;
  return tc;
}

MismatchCheck mismatch_decay_check(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& p, double rho_a, double h, double floor) {
  MismatchCheck out;
  out.holds = true;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double err = (estimates[i] - p).cwiseAbs().maxCoeff();
    const double bound = std::sqrt(h) * std::pow(rho_a, static_cast<double>(i + 1)) * (1.0 + 1e-6);
    const double ratio = err / bound;
    if (err > floor && ratio > out.max_ratio) {
      out.max_ratio = ratio;
      out.worst_iteration = static_cast<long>(i);
    }
    if (err > bound && err > floor) out.holds = false;
    if (err > 1e-13) {
      xs.push_back(static_cast<double>(i));
      ys.push_back(std::log(err));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    out.fitted_rate = std::exp(sxy / sxx);
  }
  return out;
}

}  // namespace exdiff
