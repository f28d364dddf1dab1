#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "errors.hpp"
#include "experiment.hpp"
#include "io_util.hpp"
#include "test_support.hpp"

using namespace exdiff;
using nlohmann::json;

namespace {

json base_config() {
  return {{"model", {{"kind", "least_squares"}, {"seed", 3}, {"n_agents", 6}, {"dim", 2}, {"samples_per_agent", 8}}},
          {"graph", {{"kind", "random"}, {"seed", 2}, {"edge_probability", 0.4}}},
          {"matrix", {{"rule", "metropolis"}}},
          {"algorithms", {{{"name", "exact_diffusion"}, {"mu", 0.02}}, {{"name", "diging"}, {"mu", 0.01}}}},
          {"max_iters", 3000}};
}

std::string config_error(const json& doc) {
  try {
    parse_config(doc, ".", {});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::configuration);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config errors carry field paths") {
  auto doc = base_config();
  doc["algorithms"][1]["name"] = "gossip";
  CHECK(config_error(doc).find("algorithms[1]") != std::string::npos);
  doc = base_config();
  doc["graph"]["kind"] = "torus";
  CHECK(config_error(doc).find("graph.kind") != std::string::npos);
  doc = base_config();
  doc["algorithms"][0]["mu"] = -1.0;
  CHECK(config_error(doc).find("algorithms[0].mu") != std::string::npos);
  doc = base_config();
  doc["algorithms"][0]["mu_o"] = 0.1;
  CHECK(config_error(doc).find("algorithms[0]") != std::string::npos);
  doc = base_config();
  doc["two_agent"] = {{"a", 1.5}};
  CHECK(config_error(doc).find("two_agent.a") != std::string::npos);
}

TEST_CASE("empty algorithm list is rejected by run") {
  auto doc = base_config();
  doc["algorithms"] = json::array();
  doc["output_dir"] = testing::scratch_dir("empty_algs");
  auto config = parse_config(doc, ".", {});
  CHECK_THROWS_WITH_AS(cmd_run(config), doctest::Contains("algorithms"), Error);
}

TEST_CASE("output directory precedence") {
  auto doc = base_config();
  doc["output_dir"] = "from_config";
  CHECK(parse_config(doc, "/base", {}).output_dir == "/base/from_config");
  ::setenv("EXDIFF_OUTPUT_DIR", "/env/out", 1);
  CHECK(parse_config(doc, "/base", {}).output_dir == "/env/out");
  Overrides o;
  o.out_dir = "/cli/out";
  CHECK(parse_config(doc, "/base", o).output_dir == "/cli/out");
  ::unsetenv("EXDIFF_OUTPUT_DIR");
}

TEST_CASE("seed override reaches model and graph") {
  Overrides o;
  o.seed = 99;
  auto c = parse_config(base_config(), ".", o);
  CHECK((*c.model)["seed"].get<std::uint64_t>() == 99);
  CHECK(c.network.graph.seed == 99);
}

TEST_CASE("run writes parseable traces and is reproducible") {
  auto dir = testing::scratch_dir("run_cmd");
  auto doc = base_config();
  doc["output_dir"] = dir + "/a";
  cmd_run(parse_config(doc, ".", {}));
  doc["output_dir"] = dir + "/b";
  cmd_run(parse_config(doc, ".", {}));
  for (const char* f : {"trace_exact_diffusion.csv", "trace_diging.csv", "run_summary.json", "matrix.csv", "graph.json", "model.json"}) {
    CHECK(read_text_file(dir + "/a/" + f) == read_text_file(dir + "/b/" + f));
  }
  auto trace = parse_trace_csv(read_text_file(dir + "/a/trace_exact_diffusion.csv"));
  CHECK(trace.back().rel_error <= 1e-10);
  auto status = read_json_file(dir + "/a/trace_diging.status.json");
  CHECK(status["status"] == "converged");
}

TEST_CASE("grid below both bounds is stable for both algorithms") {
  auto model = least_squares_model(3, 6, 2, 8);
  Network net(build_metropolis(random_connected_graph(6, 0.4, 2)));
  ScanSpec spec;
  spec.mu_grid = {0.001};
  auto r = stability_scan(*model, net, spec);
  REQUIRE(r.summaries.size() == 2);
  for (const auto& s : r.summaries) {
    CHECK(s.max_stable_mu == 0.001);
    CHECK(!s.first_unstable_mu);
  }
}

TEST_CASE("two-agent scan brackets the EXTRA onset") {
  auto model = mse_identical_model(2, 1.0, Eigen::Vector2d(1, -1));
  Network net(two_agent_matrix(0.5));
  ScanSpec spec;
  spec.mu_grid = {0.5, 1.0, 1.5, 1.9};
  spec.algorithms = {EngineKind::extra};
  auto r = stability_scan(*model, net, spec);
  REQUIRE(r.summaries[0].first_unstable_mu);
  const double onset = two_agent_extra_onset(0.5, 1.0);
  CHECK(r.summaries[0].max_stable_mu <= onset);
  CHECK(*r.summaries[0].first_unstable_mu >= onset);
  CHECK(*r.summaries[0].first_unstable_mu - r.summaries[0].max_stable_mu <= 1e-3 * onset);
}

TEST_CASE("two-agent report agrees with the eigenvalue verdicts") {
  TwoAgentSpec spec;
  auto j = two_agent_report(spec);
  CHECK(j["consistent"] == true);
  CHECK(j["observed"]["diffusion"]["status"] == "converged");
  CHECK(j["observed"]["extra"]["status"] == "diverged");
  spec.mu = spec.mu_e = 0.1;
  auto small = two_agent_report(spec);
  CHECK(small["observed"]["diffusion"]["status"] == "converged");
  CHECK(small["observed"]["extra"]["status"] == "converged");
}

TEST_CASE("analysis records") {
  NetworkSpec single;
  single.graph.kind = "complete";
  single.graph.n = 1;
  auto r1 = analyze_network(single, std::nullopt);
  CHECK(r1["degenerate"] == true);
  CHECK(r1["v_zero"] == true);
  NetworkSpec two;
  two.graph.n = 2;
  two.matrix.rule = "two_agent";
  auto r2 = analyze_network(two, std::nullopt);
  CHECK(r2["t_e_norm2"].get<double>() == doctest::Approx(1.25));
  NetworkSpec met;
  met.graph.n = 20;
  met.graph.seed = 4;
  auto r3 = analyze_network(met, HessianBounds{1.0, 2.0, 0});
  CHECK(r3["alpha_d"].get<double>() < r3["alpha_e"].get<double>());
  CHECK(r3["decomposition_check"]["multiset_ok"] == true);
}
