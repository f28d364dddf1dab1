#include <doctest.h>

#include <cmath>
#include <complex>

#include "algorithms.hpp"
#include "cost_models.hpp"
#include "errors.hpp"
#include "stability.hpp"
#include "test_support.hpp"

using namespace exdiff;

TEST_CASE("single agent error dynamics are the identity") {
  Network net(build_metropolis(Graph(1, {})));
  auto dyn = build_error_dynamics(net);
  CHECK(testing::max_abs(dyn.b - Eigen::MatrixXd::Identity(2, 2)) == 0.0);
  auto sp = decompose_b(dyn, net.perron().p);
  CHECK((sp.d - Eigen::VectorXcd::Ones(2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((sp.x - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("two-agent transition assembled by hand") {
  Network net(two_agent_matrix(0.5));
  auto model = mse_identical_model(2, 1.0, Eigen::VectorXd::Ones(1));
  auto dyn = build_error_dynamics(net, *model, StepSizes::uniform(2, 0.5));
  Eigen::Matrix4d expected;
  expected << 0.375, 0.125, -0.5, 0.5,
              0.125, 0.375, 0.5, -0.5,
              0.0625, -0.0625, 0.75, 0.25,
              -0.0625, 0.0625, 0.25, 0.75;
  CHECK(testing::max_abs(dyn.transition() - expected) < 1e-15);
}

TEST_CASE("error recursion reproduces the primal-dual engine") {
  Network net(two_agent_matrix(0.5));
  auto model = mse_identical_model(2, 1.0, Eigen::Vector2d(1, -1));
  auto steps = StepSizes::uniform(2, 0.5);
  auto dyn = build_error_dynamics(net, *model, steps);
  Eigen::Vector2d w_star(1, -1);
  Eigen::MatrixXd w_opt = Eigen::VectorXd::Ones(2) * w_star.transpose();
  Eigen::MatrixXd y_opt = optimal_dual_diffusion(net, *model, steps, w_star);
  Eigen::MatrixXd w0(2, 2);
  w0 << 3, 0, -2, 1;
  auto s = initial_state(EngineKind::exact_diffusion_pd, *model, net, w0);
  auto traj = simulate_error_recursion(dyn, stack_error(w0 - w_opt, s.y - y_opt), 100);
  REQUIRE(traj.size() == 101);
  for (int i = 1; i <= 100; ++i) {
    step(EngineKind::exact_diffusion_pd, s, *model, net, steps);
    REQUIRE((traj[static_cast<std::size_t>(i)] - stack_error(s.w - w_opt, s.y - y_opt)).cwiseAbs().maxCoeff() < 1e-12);
  }
  auto zero = simulate_error_recursion(dyn, Eigen::VectorXd::Zero(8), 10);
  for (const auto& e : zero) CHECK(e.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("restricted spectral radius matches the two-agent eigenvalues") {
  for (double mu : {0.3, 1.0, 1.9}) {
    Network net(two_agent_matrix(0.5));
    auto model = mse_identical_model(2, 1.0, Eigen::VectorXd::Ones(1));
    auto dyn = build_error_dynamics(net, *model, StepSizes::uniform(2, mu));
    auto tc = two_agent_case(0.5, 1.0, mu, mu);
    CHECK(restricted_spectral_radius(dyn.transition(), 2, 1) == doctest::Approx(tc.radius_d).epsilon(1e-10));
    auto dyn_e = build_extra_error_dynamics(net, *model, mu);
    CHECK(restricted_spectral_radius(dyn_e.transition(), 2, 1) == doctest::Approx(tc.radius_e).epsilon(1e-10));
  }
}

TEST_CASE("eigendecomposition of B on random balanced matrices") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Network net(s % 2 ? build_averaging(random_connected_graph(5, 0.4, s)) : build_metropolis(random_connected_graph(5, 0.4, s)));
    auto dyn = build_error_dynamics(net);
    auto sp = decompose_b(dyn, net.perron().p);
    CHECK(sp.reconstruction_error <= 1e-8);
    CHECK(sp.canonical_error <= 1e-10);
    CHECK(sp.inverse_error <= 1e-10);
    Eigen::MatrixXcd lr = sp.x_inv.topRows(2) * sp.x.leftCols(2);
    CHECK((lr - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::MatrixXcd xlxr = sp.x_l * sp.x_r;
    CHECK((xlxr - Eigen::MatrixXcd::Identity(xlxr.rows(), xlxr.cols())).cwiseAbs().maxCoeff() < 1e-10);
    auto sc = check_b_structure(net);
    CHECK(sc.multiset_ok);
    CHECK(sc.canonical_ok);
    CHECK(sc.v_prime_full_rank);
  }
}

TEST_CASE("step-size bounds") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto m = testing::random_symmetric(s, 6);
    Network net(m);
    const double nu = 0.5, delta = 2.0;
    auto bd = diffusion_step_bound(net, Eigen::VectorXd::Ones(6), nu, delta, 0);
    auto be = extra_step_bound(net, nu, delta);
    CHECK(bd.alpha >= 1.0);
    CHECK(be.alpha >= 1.0);
    CHECK(bd.mu_bound > 0.0);
    CHECK(bd.mu_bound < 1.0 / delta);
    CHECK(be.mu_bound < 1.0 / delta);
    CHECK(bd.alpha < be.alpha);
    CHECK(bd.mu_bound > be.mu_bound);
    CHECK(bd.rate(0.5 * bd.mu_bound) < 1.0);
    CHECK(bd.rate(bd.mu_bound) <= 1.0 + 1e-12);
    CHECK(be.rate(0.5 * be.mu_bound) < 1.0);
    CHECK(bd.lambda == doctest::Approx(std::sqrt((1 + m.perron().lambda2) / 2)));
  }
  Network avg(build_averaging(Graph::star(4)));
  CHECK_THROWS_AS(extra_step_bound(avg, 1.0, 2.0), Error);
  CHECK_THROWS_AS(diffusion_step_bound(Network(build_metropolis(Graph(1, {}))), Eigen::VectorXd::Ones(1), 1.0, 1.0, 0), Error);
}

TEST_CASE("exact diffusion converges at the bound") {
  auto model = least_squares_model(21, 6, 2, 40);
  Network net(build_metropolis(random_connected_graph(6, 0.5, 21)));
  auto hb = model->hessian_bounds();
  auto bd = diffusion_step_bound(net, Eigen::VectorXd::Ones(6), hb.nu, hb.delta, hb.k_o);
  auto dyn = build_error_dynamics(net, *model, StepSizes::uniform(6, bd.mu_bound));
  CHECK(restricted_spectral_radius(dyn.transition(), 6, 2) < 1.0);
}

TEST_CASE("norm comparison closed form") {
  auto one = norm_comparison(Eigen::MatrixXd::Identity(1, 1));
  CHECK(one.t_d_norm2 == doctest::Approx(1.0));
  CHECK(one.t_e_norm2 == doctest::Approx(1.0));
  CHECK(one.closed_form == doctest::Approx(1.0));
  auto two = norm_comparison(two_agent_matrix(0.5));
  CHECK(two.t_e_norm2 == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(two.closed_form == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(two.strict);
  auto eight = norm_comparison(build_metropolis(random_connected_graph(8, 0.4, 77)));
  CHECK(eight.residual <= 1e-10);
  CHECK(eight.t_d_norm2 < eight.t_e_norm2);
}

TEST_CASE("two-agent closed forms") {
  const double a = 0.4;
  auto unit = two_agent_case(a, 1.0, 1.0, 1.0);
  std::vector<double> roots{std::abs(unit.roots_d[0]), std::abs(unit.roots_d[1])};
  std::sort(roots.begin(), roots.end());
  CHECK(roots[0] < 1e-14);
  CHECK(roots[1] == doctest::Approx(a));

  auto complex_case = two_agent_case(a, 1.0, 0.5, 0.1);
  REQUIRE(complex_case.delta_disc < 0.0);
  CHECK(std::abs(complex_case.roots_d[0]) * std::abs(complex_case.roots_d[1]) == doctest::Approx((1 - 0.5) * a));

  auto edge = two_agent_case(a, 1.0, 0.5, a + 1);
  auto prod = edge.roots_e[0] * edge.roots_e[1];
  CHECK(prod.real() == doctest::Approx(-1.0));
  CHECK(std::max(std::abs(edge.roots_e[0]), std::abs(edge.roots_e[1])) > 1.0);
  CHECK(edge.extra_predicted_unstable);
  CHECK(!edge.extra_stable);
  CHECK(two_agent_extra_onset(a, 1.0) < a + 1);
}

TEST_CASE("two-agent verdicts over a grid") {
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9})
    for (double sigma2 : {0.5, 1.0, 2.0})
      for (double x = 0.07; x < 3.0; x += 0.1) {
        auto tc = two_agent_case(a, sigma2, x / sigma2, x / sigma2);
        CHECK(tc.crosscheck_error <= 1e-10);
        CHECK(tc.diffusion_stable == (x < 2.0));
        CHECK(tc.diffusion_sufficient == (x < 2.0));
        CHECK(tc.extra_stable == (x < (1 + 3 * a) / 2));
        if (tc.extra_predicted_unstable) CHECK(!tc.extra_stable);
      }
}

TEST_CASE("Perron mismatch envelope") {
  Eigen::VectorXd p(3);
  p << 0.5, 0.3, 0.2;
  const double rho = 0.6, h = 2.0;
  std::vector<Eigen::VectorXd> good, bad;
  for (int i = 0; i < 40; ++i) {
    good.push_back(p.array() + 0.5 * std::sqrt(h) * std::pow(rho, i + 1));
    bad.push_back(p.array() + std::sqrt(h) * std::pow(0.9, i + 1));
  }
  auto g = mismatch_decay_check(good, p, rho, h);
  CHECK(g.holds);
  CHECK(g.max_ratio <= 1.0);
  CHECK(!mismatch_decay_check(bad, p, rho, h).holds);
}

TEST_CASE("diffusion and EXTRA rates agree to first order") {
  Network net(testing::random_symmetric(4, 7));
  auto bd = diffusion_step_bound(net, Eigen::VectorXd::Ones(7), 1.0, 3.0, 0);
  auto be = extra_step_bound(net, 1.0, 3.0);
  double prev = 1e300;
  for (double mu = 0.1 * be.mu_bound; mu > 1e-5 * be.mu_bound; mu /= 10) {
    const double gap = std::abs(bd.rate(mu) - be.rate(mu)) / mu;
    CHECK(gap < prev);
    prev = gap;
    CHECK(1.0 - bd.rate(mu) == doctest::Approx(mu / 7.0).epsilon(0.01));
  }
  CHECK(prev < 1e-3 / 7.0);
}
