#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "algorithms.hpp"
#include "cost_models.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "graph.hpp"
#include "spectral.hpp"
#include "stability.hpp"

using namespace exdiff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Symmetric doubly-stochastic matrix: Metropolis weights scaled per edge by a random factor in (0.2, 1].
CombinationMatrix random_symmetric_ds(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> prob(0.2, 0.9), factor(0.2, 1.0);
  Graph g = random_connected_graph(n, prob(rng), rng());
  auto met = build_metropolis(g);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& [i, j] : g.edges()) {
    const double w = met.a()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * factor(rng);
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
    a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
  }
  for (Eigen::Index k = 0; k < a.rows(); ++k) a(k, k) = 1.0 - a.col(k).sum();
  return CombinationMatrix(g, a);
}

double r_squared_loglinear(const std::vector<TraceRecord>& trace, std::size_t from) {
  std::vector<double> x, y;
  for (std::size_t i = from; i < trace.size(); ++i) {
    x.push_back(static_cast<double>(trace[i].iteration));
    y.push_back(std::log(trace[i].rel_error));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
}

Outcome linear_convergence() {
  const auto t0 = Clock::now();
  auto model = least_squares_model(2024, 20, 5, 100);
  Network net(build_metropolis(random_connected_graph(20, 0.3, 2024)));
  auto hb = model->hessian_bounds();
  auto bound = diffusion_step_bound(net, Eigen::VectorXd::Ones(20), hb.nu, hb.delta, hb.k_o);
  RunOptions opt;
  opt.steps = StepSizes::uniform(20, 0.5 * bound.mu_bound);
  opt.max_iters = 2000000;
  opt.stop_threshold = 1e-10;
  auto r = run(*model, net, opt);
  const double elapsed = seconds_since(t0);
  const double r2 = r_squared_loglinear(r.trace, r.trace.size() / 2);
  Outcome o;
  o.pass = r.status == RunStatus::converged && r.final_rel_error <= 1e-10 && r2 >= 0.99 && elapsed < 5.0;
  o.detail = "mu=" + fmt("%.3e", opt.steps.mu(0)) + " iters=" + std::to_string(r.iterations) + " rel_error=" + fmt("%.2e", r.final_rel_error) +
             " R2=" + fmt("%.5f", r2) + " time=" + fmt("%.2fs", elapsed);
  return o;
}

Outcome two_agent_split() {
  const auto t0 = Clock::now();
  TwoAgentSpec spec;
  spec.mu = 1.9;
  spec.mu_e = 1.6;
  spec.iterations = 20000;
  spec.stop_threshold = 1e-8;
  RunResult rd, re;
  two_agent_report(spec, &rd, &re);
  const double elapsed = seconds_since(t0);
  Outcome o;
  const bool extra_diverged = re.status == RunStatus::diverged && !(re.final_rel_error <= 1e12);
  o.pass = rd.status == RunStatus::converged && rd.final_rel_error <= 1e-8 && rd.iterations <= 20000 && extra_diverged && elapsed < 2.0;
  o.detail = "diffusion " + to_string(rd.status) + " at " + std::to_string(rd.iterations) + " iters (" + fmt("%.2e", rd.final_rel_error) + "), extra " +
             to_string(re.status) + " at " + std::to_string(re.iterations) + " iters, time=" + fmt("%.3fs", elapsed);
  return o;
}

Outcome closed_form_identity(std::vector<CombinationMatrix>& instances) {
  double worst = 0, worst_api = 0;
  for (const auto& m : instances) {
    const auto n = m.a().rows();
    Eigen::MatrixXd v2 = (Eigen::MatrixXd::Identity(n, n) - m.a()) / (2.0 * static_cast<double>(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> lhs(Eigen::MatrixXd::Identity(n, n) + v2, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> spec(m.a(), Eigen::EigenvaluesOnly);
    const double closed = (2.0 * static_cast<double>(n) + 1.0 - spec.eigenvalues()(0)) / (2.0 * static_cast<double>(n));
    worst = std::max(worst, std::abs(lhs.eigenvalues()(n - 1) - closed));
    worst_api = std::max(worst_api, std::abs(norm_comparison(m).t_e_norm2 - closed));
  }
  Outcome o;
  o.pass = worst <= 1e-10 && worst_api <= 1e-10;
  o.detail = std::to_string(instances.size()) + " matrices, max |lambda_max(I+V^2) - closed| = " + fmt("%.2e", worst) + ", library ||T_e||^2 residual " +
             fmt("%.2e", worst_api);
  return o;
}

Outcome strict_norm_ordering(std::vector<CombinationMatrix>& instances) {
  int violations = 0;
  double min_gap = 1e300;
  for (const auto& m : instances) {
    const auto n = static_cast<Eigen::Index>(m.n());
    Network net(m);
    Eigen::MatrixXd t_d = Eigen::MatrixXd::Zero(2 * n, 2 * n), t_e = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    t_d.topLeftCorner(n, n) = net.a_bar.transpose();
    t_d.bottomLeftCorner(n, n) = net.v->v * net.a_bar.transpose();
    t_e.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    t_e.bottomLeftCorner(n, n) = net.v->v;
    const double nd = std::pow(Eigen::JacobiSVD<Eigen::MatrixXd>(t_d).singularValues()(0), 2);
    const double ne = std::pow(Eigen::JacobiSVD<Eigen::MatrixXd>(t_e).singularValues()(0), 2);
    auto bd = diffusion_step_bound(net, Eigen::VectorXd::Ones(n), 1.0, 2.0, 0);
    auto be = extra_step_bound(net, 1.0, 2.0);
    const bool ok = nd < ne && bd.alpha < be.alpha && bd.mu_bound > be.mu_bound;
    if (!ok) ++violations;
    min_gap = std::min(min_gap, ne - nd);
  }
  Outcome o;
  o.pass = violations == 0;
  o.detail = std::to_string(violations) + " violations over " + std::to_string(instances.size()) + " matrices, min ||T_e||^2 - ||T_d||^2 = " +
             fmt("%.3e", min_gap);
  return o;
}

// Greedy matching of two eigenvalue lists; returns the worst matched distance.
double multiset_distance(std::vector<std::complex<double>> a, std::vector<std::complex<double>> b) {
  if (a.size() != b.size()) return 1e300;
  double worst = 0;
  for (auto z : a) {
    auto it = std::min_element(b.begin(), b.end(), [&](auto x, auto y) { return std::abs(x - z) < std::abs(y - z); });
    worst = std::max(worst, std::abs(*it - z));
    b.erase(it);
  }
  return worst;
}

Outcome eigenstructure() {
  double worst_multiset = 0, worst_canonical = 0;
  int count = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    std::mt19937_64 rng(1000 + s);
    const std::size_t n = 3 + s % 6;
    Graph g = random_connected_graph(n, std::uniform_real_distribution<double>(0.2, 0.8)(rng), rng());
    Network net(s % 2 ? build_averaging(g) : build_metropolis(g));
    auto dyn = build_error_dynamics(net);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dyn.b);
    std::vector<std::complex<double>> got(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    Eigen::MatrixXd p_half = net.perron().p.cwiseSqrt().asDiagonal();
    Eigen::MatrixXd sym = p_half.inverse() * net.a_bar * p_half;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> abar(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
    std::vector<std::complex<double>> expected{1.0, 1.0};
    for (Eigen::Index k = 0; k + 1 < abar.eigenvalues().size(); ++k) {
      const double l = abar.eigenvalues()(k);
      const double im = std::sqrt(std::max(0.0, l * (1 - l)));
      expected.emplace_back(l, im);
      expected.emplace_back(l, -im);
    }
    worst_multiset = std::max(worst_multiset, multiset_distance(got, expected));
    auto sp = decompose_b(dyn, net.perron().p);
    Eigen::MatrixXcd lr = sp.x_inv.topRows(2) * sp.x.leftCols(2);
    Eigen::MatrixXcd xlxr = sp.x_l * sp.x_r;
    double canon = std::max({sp.canonical_error, (lr - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff(),
                             (xlxr - Eigen::MatrixXcd::Identity(xlxr.rows(), xlxr.cols())).cwiseAbs().maxCoeff()});
    worst_canonical = std::max(worst_canonical, canon);
    ++count;
  }
  Outcome o;
  o.pass = worst_multiset <= 1e-8 && worst_canonical <= 1e-10;
  o.detail = std::to_string(count) + " matrices, multiset error " + fmt("%.2e", worst_multiset) + ", canonical R/L error " + fmt("%.2e", worst_canonical);
  return o;
}

Outcome error_recursion() {
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 rng(500 + s);
    const std::size_t n = 3 + s % 5, m = 1 + s % 3;
    Graph g = random_connected_graph(n, 0.5, rng());
    Network net(s % 2 ? build_averaging(g) : build_metropolis(g));
    auto model = least_squares_model(rng(), n, m, 6);
    auto hb = model->hessian_bounds();
    Eigen::VectorXd mu(static_cast<Eigen::Index>(n));
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (Eigen::Index k = 0; k < mu.size(); ++k) mu(k) = u(rng) / hb.delta;
    StepSizes steps{mu, mu.maxCoeff(), 1.0 / mu.maxCoeff()};
    auto w_star = solve_centralized(*model->with_weights(limit_weights(EngineKind::exact_diffusion, *model, net, steps))).w_star;
    Eigen::MatrixXd w_opt = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)) * w_star.transpose();
    Eigen::MatrixXd y_opt = optimal_dual_diffusion(net, *model, steps, w_star);
    Eigen::MatrixXd w0 = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    auto pd = initial_state(EngineKind::exact_diffusion_pd, *model, net, w0);
    auto acc = initial_state(EngineKind::exact_diffusion, *model, net, w0);
    auto dyn = build_error_dynamics(net, *model, steps);
    auto traj = simulate_error_recursion(dyn, stack_error(w0 - w_opt, pd.y - y_opt), 100);
    for (std::size_t i = 1; i <= 100; ++i) {
      step(EngineKind::exact_diffusion_pd, pd, *model, net, steps);
      step(EngineKind::exact_diffusion, acc, *model, net, steps);
      worst = std::max(worst, (traj[i] - stack_error(pd.w - w_opt, pd.y - y_opt)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (traj[i] - stack_error(acc.w - w_opt, pd.y - y_opt)).cwiseAbs().maxCoeff());
    }
  }
  Outcome o;
  o.pass = worst <= 1e-9;
  o.detail = "20 instances x 100 iterations, max entrywise deviation " + fmt("%.2e", worst);
  return o;
}

Outcome dual_sum_invariant() {
  double worst = 0;
  int runs = 0;
  for (std::uint64_t s = 0; s < 15; ++s) {
    std::mt19937_64 rng(700 + s);
    const std::size_t n = 4 + s % 6;
    Graph g = random_connected_graph(n, 0.4, rng());
    const bool extra = s >= 10;
    Network net(extra || s % 2 == 0 ? build_metropolis(g) : build_averaging(g));
    auto model = least_squares_model(rng(), n, 2, 8);
    auto hb = model->hessian_bounds();
    RunOptions opt;
    opt.engine = extra ? EngineKind::extra : EngineKind::exact_diffusion_pd;
    opt.steps = StepSizes::uniform(n, 0.5 / hb.delta);
    opt.max_iters = 5000;
    opt.stop_threshold = 1e-20;
    auto target = solve_centralized(*model->with_weights(limit_weights(opt.engine, *model, net, opt.steps))).w_star;
    Eigen::MatrixXd y_opt =
        extra ? optimal_dual_extra(net, *model, opt.steps.mu(0), target) : optimal_dual_diffusion(net, *model, opt.steps, target);
    opt.observer = [&](const AlgorithmState& st) {
      worst = std::max(worst, (st.y - y_opt).colwise().sum().cwiseAbs().maxCoeff() / static_cast<double>(n));
    };
    run(*model, net, opt);
    ++runs;
  }
  Outcome o;
  o.pass = worst <= 1e-10;
  o.detail = std::to_string(runs) + " runs, max |1'Y~_i|/N = " + fmt("%.2e", worst);
  return o;
}

Outcome optimality_certificate() {
  double worst = 0;
  int converged = 0, total = 0;
  auto check = [&](const CostModel& model, const Network& net, RunOptions opt) {
    opt.max_iters = 200000;
    opt.stop_threshold = 1e-22;
    auto r = run(model, net, opt);
    ++total;
    if (r.status != RunStatus::converged) return;
    ++converged;
    Eigen::VectorXd w_bar = r.final_state.w.colwise().mean().transpose();
    worst = std::max(worst, model.weighted_gradient(w_bar, model.q()).norm());
  };
  for (std::uint64_t s = 0; s < 6; ++s) {
    std::mt19937_64 rng(900 + s);
    const std::size_t n = 5 + s;
    Graph g = random_connected_graph(n, 0.4, rng());
    Eigen::VectorXd q(static_cast<Eigen::Index>(n));
    std::uniform_real_distribution<double> u(0.2, 2.0);
    for (Eigen::Index k = 0; k < q.size(); ++k) q(k) = u(rng);
    auto base = least_squares_model(rng(), n, 3, 10);
    auto weighted = base->with_weights(q);
    const double mu = 0.3 / base->hessian_bounds().delta;
    Network avg(build_averaging(g));
    Network met(build_metropolis(g));
    RunOptions opt;
    opt.engine = EngineKind::exact_diffusion;
    opt.steps = StepSizes::from_q(q, avg.perron().p, mu * avg.perron().p.minCoeff() / q.maxCoeff());
    check(*weighted, avg, opt);
    opt.engine = EngineKind::exact_diffusion_pd;
    check(*weighted, avg, opt);
    opt.engine = EngineKind::exact_diffusion_adaptive;
    check(*weighted, avg, opt);
    for (EngineKind kind : {EngineKind::exact_diffusion, EngineKind::extra, EngineKind::diging, EngineKind::aug_dgm}) {
      opt.engine = kind;
      opt.steps = StepSizes::uniform(n, kind == EngineKind::diging || kind == EngineKind::aug_dgm ? 0.3 * mu : mu);
      check(*base, met, opt);
    }
  }
  Outcome o;
  o.pass = converged == total && worst <= 1e-7;
  o.detail = std::to_string(converged) + "/" + std::to_string(total) + " runs converged, max ||sum q_k grad J_k(w_bar)|| = " + fmt("%.2e", worst);
  return o;
}

Outcome adaptive_perron() {
  Graph g = random_connected_graph(5, 0.4, 31);
  Network net(build_averaging(g));
  auto model = least_squares_model(31, 5, 3, 10);
  RunOptions opt;
  opt.engine = EngineKind::exact_diffusion_adaptive;
  opt.steps = StepSizes::from_q(model->q(), net.perron().p, 0.2 / model->hessian_bounds().delta);
  opt.max_iters = 100000;
  opt.stop_threshold = 1e-8;
  opt.record_perron = true;
  auto r = run(*model, net, opt);
  auto mc = mismatch_decay_check(r.perron_estimates, net.perron().p, net.perron().rhoA, 1.0);
  Outcome o;
  o.pass = r.status == RunStatus::converged && r.final_rel_error <= 1e-8 && mc.holds;
  o.detail = to_string(r.status) + " in " + std::to_string(r.iterations) + " iters (" + fmt("%.2e", r.final_rel_error) + "), envelope ratio max " +
             fmt("%.3f", mc.max_ratio) + ", rho_A=" + fmt("%.4f", net.perron().rhoA) + " fitted=" + fmt("%.4f", mc.fitted_rate);
  return o;
}

Outcome stability_ordering() {
  int violations = 0;
  double min_ratio = 1e300;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 rng(1300 + s);
    const std::size_t n = 3 + s % 8;
    auto m = random_symmetric_ds(rng, n);
    Network net(m);
    auto model = least_squares_model(rng(), n, 2, 6);
    const double d = model->hessian_bounds().delta;
    ScanSpec spec;
    for (double c : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0}) spec.mu_grid.push_back(c / d);
    spec.max_iters = 5000;
    auto r = stability_scan(*model, net, spec);
    const double ed = r.summaries[0].max_stable_mu, ex = r.summaries[1].max_stable_mu;
    if (ed < ex) ++violations;
    min_ratio = std::min(min_ratio, ed / ex);
  }
  double worst_margin = 1e300;
  std::string onsets;
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    auto model = mse_identical_model(2, 1.0, Eigen::Vector2d(1, -1));
    Network net(two_agent_matrix(a));
    ScanSpec spec;
    spec.mu_grid = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 1.99};
    spec.algorithms = {EngineKind::extra};
    spec.max_iters = 20000;
    auto r = stability_scan(*model, net, spec);
    const double onset = r.summaries[0].first_unstable_mu.value_or(1e300);
    worst_margin = std::min(worst_margin, (a + 1.0) + 1e-3 - onset);
    onsets += fmt(" %.4f", onset);
  }
  Outcome o;
  o.pass = violations == 0 && worst_margin >= 0;
  o.detail = std::to_string(violations) + " violations on 20 instances (min ED/EXTRA ratio " + fmt("%.3f", min_ratio) + "); two-agent EXTRA onsets" + onsets;
  return o;
}

Outcome gradient_check() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  auto ls = least_squares_model(77, 4, 5, 10);
  auto lg = logistic_model(77, 4, 5, 10, 0.1);
  std::vector<Eigen::MatrixXd> r;
  std::vector<Eigen::VectorXd> c;
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXd x(5, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
    r.push_back(x.transpose() * x / 5.0);
    Eigen::VectorXd v(5);
    for (Eigen::Index i = 0; i < 5; ++i) v(i) = n01(rng);
    c.push_back(v);
  }
  auto mse = mse_quadratic_model(r, c);
  double worst = 0;
  const double h = 1e-6;
  for (const CostModel* model : {static_cast<const CostModel*>(ls.get()), static_cast<const CostModel*>(lg.get()), static_cast<const CostModel*>(mse.get())}) {
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXd w(5);
      for (Eigen::Index i = 0; i < 5; ++i) w(i) = n01(rng);
      const auto k = static_cast<std::size_t>(t % 4);
      Eigen::VectorXd fd(5);
      for (Eigen::Index j = 0; j < 5; ++j) {
        Eigen::VectorXd wp = w, wm = w;
        wp(j) += h;
        wm(j) -= h;
        fd(j) = (model->value(k, wp) - model->value(k, wm)) / (2 * h);
      }
      Eigen::VectorXd g = model->gradient(k, w);
      worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
    }
  }
  Outcome o;
  o.pass = worst <= 1e-6;
  o.detail = "30 points over 3 models, max relative error " + fmt("%.2e", worst);
  return o;
}

}  // namespace

int main() {
  std::mt19937_64 rng(20240611);
  std::vector<CombinationMatrix> symmetric;
  for (int i = 0; i < 100; ++i) symmetric.push_back(random_symmetric_ds(rng, 2 + static_cast<std::size_t>(i % 9)));

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"exact linear convergence", linear_convergence},
      {"two-agent stability split", two_agent_split},
      {"closed-form norm identity", [&] { return closed_form_identity(symmetric); }},
      {"strict norm inequality", [&] { return strict_norm_ordering(symmetric); }},
      {"error dynamics eigenstructure", eigenstructure},
      {"error-recursion equivalence", error_recursion},
      {"dual sum invariant", dual_sum_invariant},
      {"optimality certificate", optimality_certificate},
      {"adaptive Perron estimation", adaptive_perron},
      {"stability-range ordering", stability_ordering},
      {"gradient correctness", gradient_check},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed ? 1 : 0;
}
