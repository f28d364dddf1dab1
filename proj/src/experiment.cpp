#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "errors.hpp"
#include "io_util.hpp"

namespace exdiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& what) { fail(ErrorKind::configuration, "config." + path + ": " + what); }

double get_positive(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) bad_field(path + "." + key, "must be a number");
  double v = j[key].get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) bad_field(path + "." + key, "must be positive");
  return v;
}

long get_count(const json& j, const std::string& key, const std::string& path, long fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() || j[key].get<long>() < 0) bad_field(path + "." + key, "must be a non-negative integer");
  return j[key].get<long>();
}

std::string get_string(const json& j, const std::string& key, const std::string& path, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) bad_field(path + "." + key, "must be a string");
  return j[key].get<std::string>();
}

std::vector<double> get_positive_list(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) return {};
  if (!j[key].is_array()) bad_field(path + "." + key, "must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j[key].size(); ++i) {
    const auto& v = j[key][i];
    if (!v.is_number() || !(v.get<double>() > 0.0)) bad_field(path + "." + key + "[" + std::to_string(i) + "]", "must be a positive number");
    out.push_back(v.get<double>());
  }
  return out;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
  return (fs::path(base) / p).string();
}

GraphSpec parse_graph(const json& j, const std::string& path, const std::string& base) {
  if (!j.is_object()) bad_field(path, "must be an object");
  GraphSpec g;
  g.kind = get_string(j, "kind", path, g.kind);
  if (g.kind != "random" && g.kind != "path" && g.kind != "ring" && g.kind != "star" && g.kind != "complete" && g.kind != "file")
    bad_field(path + ".kind", "unknown graph kind '" + g.kind + "'");
  g.n = static_cast<std::size_t>(get_count(j, "n", path, 0));
  g.seed = static_cast<std::uint64_t>(get_count(j, "seed", path, 1));
  g.edge_probability = get_positive(j, "edge_probability", path, g.edge_probability);
  if (g.edge_probability > 1.0) bad_field(path + ".edge_probability", "must lie in (0, 1]");
  g.path = resolve(base, get_string(j, "path", path, ""));
  if (g.kind == "file" && g.path.empty()) bad_field(path + ".path", "required for kind 'file'");
  return g;
}

MatrixSpec parse_matrix(const json& j, const std::string& path, const std::string& base) {
  if (!j.is_object()) bad_field(path, "must be an object");
  MatrixSpec m;
  m.rule = get_string(j, "rule", path, m.rule);
  if (m.rule != "metropolis" && m.rule != "averaging" && m.rule != "file" && m.rule != "two_agent")
    bad_field(path + ".rule", "unknown matrix rule '" + m.rule + "'");
  m.path = resolve(base, get_string(j, "path", path, ""));
  if (m.rule == "file" && m.path.empty()) bad_field(path + ".path", "required for rule 'file'");
  m.a = get_positive(j, "a", path, m.a);
  if (m.a >= 1.0) bad_field(path + ".a", "must lie in (0, 1)");
  return m;
}

double default_mu(EngineKind kind) {
  switch (kind) {
    case EngineKind::exact_diffusion:
    case EngineKind::exact_diffusion_pd:
    case EngineKind::exact_diffusion_adaptive: return 0.013;
    case EngineKind::extra: return 0.007;
    case EngineKind::diging: return 0.0028;
    case EngineKind::aug_dgm: return 0.003;
  }
  return 0.01;
}

AlgorithmSpec parse_algorithm(const json& j, const std::string& path) {
  if (!j.is_object()) bad_field(path, "must be an object");
  AlgorithmSpec a;
  const auto name = get_string(j, "name", path, "");
  if (name.empty()) bad_field(path + ".name", "is required");
  try {
    a.engine = engine_from_string(name);
  } catch (const Error&) {
    bad_field(path + ".name", "unknown algorithm '" + name + "'");
  }
  a.label = get_string(j, "label", path, name);
  if (a.label.empty() || a.label.find_first_of("/\\ ") != std::string::npos) bad_field(path + ".label", "must be a non-empty file-name-safe string");
  if (j.contains("mu")) {
    if (j["mu"].is_array()) {
      try {
        a.mu_vector = vector_from_json(j["mu"]);
      } catch (const Error&) {
        bad_field(path + ".mu", "must be a number or an array of numbers");
      }
      if ((a.mu_vector->array() <= 0.0).any()) bad_field(path + ".mu", "entries must be positive");
      if (a.engine == EngineKind::extra || a.engine == EngineKind::diging) bad_field(path + ".mu", name + " needs a scalar step size");
    } else {
      a.mu = get_positive(j, "mu", path, 0.0);
    }
  }
  if (j.contains("mu_o")) a.mu_o = get_positive(j, "mu_o", path, 0.0);
  if (j.contains("mu_bound_fraction")) {
    a.bound_fraction = get_positive(j, "mu_bound_fraction", path, 0.0);
    if (a.engine != EngineKind::exact_diffusion && a.engine != EngineKind::exact_diffusion_pd && a.engine != EngineKind::extra)
      bad_field(path + ".mu_bound_fraction", "only available for exact_diffusion, exact_diffusion_pd and extra");
  }
  if (j.contains("tune")) {
    const auto& t = j["tune"];
    if (!t.is_object()) bad_field(path + ".tune", "must be an object");
    TuneSpec ts;
    ts.grid = get_positive_list(t, "grid", path + ".tune");
    if (ts.grid.empty()) bad_field(path + ".tune.grid", "must be a non-empty array");
    std::sort(ts.grid.begin(), ts.grid.end());
    ts.refine = static_cast<int>(get_count(t, "refine", path + ".tune", 0));
    a.tune = ts;
  }
  int given = (a.mu || a.mu_vector) + a.mu_o.has_value() + a.bound_fraction.has_value() + a.tune.has_value();
  if (given > 1) bad_field(path, "give at most one of mu, mu_o, mu_bound_fraction, tune");
  if (a.engine == EngineKind::exact_diffusion_adaptive && (a.mu || a.mu_vector)) bad_field(path + ".mu", "exact_diffusion_adaptive takes mu_o");
  if (given == 0) {
    if (a.engine == EngineKind::exact_diffusion_adaptive) a.mu_o = default_mu(a.engine);
    else a.mu = default_mu(a.engine);
  }
  return a;
}

std::vector<NetworkSpec> parse_analyze(const json& j, const std::string& base) {
  if (!j.is_array()) bad_field("analyze", "must be an array");
  std::vector<NetworkSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "analyze[" + std::to_string(i) + "]";
    if (!j[i].is_object()) bad_field(path, "must be an object");
    NetworkSpec s;
    s.label = get_string(j[i], "label", path, "network_" + std::to_string(i));
    s.graph = parse_graph(j[i].value("graph", json::object()), path + ".graph", base);
    s.matrix = parse_matrix(j[i].value("matrix", json::object()), path + ".matrix", base);
    if (s.matrix.rule == "two_agent") s.graph.n = 2;
    if (s.graph.n == 0 && s.graph.kind != "file") bad_field(path + ".graph.n", "must be given");
    out.push_back(s);
  }
  return out;
}

template <typename F>
void parallel_for(std::size_t count, int jobs, F&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(jobs, static_cast<int>(count))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

json complex_list(const std::vector<std::complex<double>>& v) {
  json out = json::array();
  for (auto z : v) out.push_back({z.real(), z.imag()});
  return out;
}

json nullable(double v, bool ok) { return ok && std::isfinite(v) ? json(v) : json(nullptr); }

std::string output_dir(const ExperimentConfig& config) { return config.output_dir; }

void write_run(const std::string& dir, const std::string& label, const RunResult& r) {
  write_text_file((fs::path(dir) / ("trace_" + label + ".csv")).string(), trace_csv(r.trace));
  write_json_file((fs::path(dir) / ("trace_" + label + ".status.json")).string(), status_json(r));
}

std::shared_ptr<CostModel> require_model(const ExperimentConfig& config) {
  if (!config.model) bad_field("model", "is required for this command");
  return model_from_json(*config.model);
}

}  // namespace

json status_json(const RunResult& r) {
  return {{"status", to_string(r.status)}, {"iterations", r.iterations}, {"final_rel_error", nullable(r.final_rel_error, true)}};
}

ExperimentConfig parse_config(const json& doc, const std::string& base_dir, const Overrides& overrides) {
  if (!doc.is_object()) fail(ErrorKind::configuration, "config: top level must be a JSON object");
  ExperimentConfig c;
  if (doc.contains("model")) {
    json model = doc["model"];
    if (!model.is_object()) bad_field("model", "must be an object");
    if (model.value("kind", "") == "file") {
      const auto p = resolve(base_dir, get_string(model, "path", "model", ""));
      if (p.empty()) bad_field("model.path", "required for kind 'file'");
      model = read_json_file(p);
    }
    if (overrides.seed) model["seed"] = static_cast<std::uint64_t>(*overrides.seed);
    c.model = model;
  }
  c.network.label = "network";
  if (doc.contains("graph")) c.network.graph = parse_graph(doc["graph"], "graph", base_dir);
  if (doc.contains("matrix")) c.network.matrix = parse_matrix(doc["matrix"], "matrix", base_dir);
  if (c.network.graph.n == 0 && c.model && c.model->contains("n_agents") && (*c.model)["n_agents"].is_number_integer() && (*c.model)["n_agents"].get<long long>() > 0)
    c.network.graph.n = (*c.model)["n_agents"].get<std::size_t>();
  if (c.network.matrix.rule == "two_agent") c.network.graph.n = 2;
  if (overrides.seed) c.network.graph.seed = static_cast<std::uint64_t>(*overrides.seed);
  if (doc.contains("algorithms")) {
    const auto& algs = doc["algorithms"];
    if (!algs.is_array()) bad_field("algorithms", "must be an array");
    for (std::size_t i = 0; i < algs.size(); ++i) c.algorithms.push_back(parse_algorithm(algs[i], "algorithms[" + std::to_string(i) + "]"));
    for (std::size_t i = 0; i < c.algorithms.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (c.algorithms[i].label == c.algorithms[j].label) bad_field("algorithms[" + std::to_string(i) + "].label", "duplicate label '" + c.algorithms[i].label + "'");
  }
  c.max_iters = get_count(doc, "max_iters", "", c.max_iters);
  c.stop_threshold = get_positive(doc, "stop_threshold", "", c.stop_threshold);
  c.output_dir = get_string(doc, "output_dir", "", c.output_dir);
  c.output_dir = resolve(base_dir, c.output_dir);
  if (const char* env = std::getenv("EXDIFF_OUTPUT_DIR"); env && *env) c.output_dir = env;
  if (overrides.out_dir) c.output_dir = *overrides.out_dir;
  c.jobs = static_cast<int>(get_count(doc, "jobs", "", 1));
  if (overrides.jobs > 1) c.jobs = overrides.jobs;
  if (c.jobs < 1) c.jobs = 1;
  if (doc.contains("scan")) {
    const auto& s = doc["scan"];
    if (!s.is_object()) bad_field("scan", "must be an object");
    ScanSpec spec;
    spec.mu_grid = get_positive_list(s, "mu_grid", "scan");
    if (spec.mu_grid.empty()) bad_field("scan.mu_grid", "must be a non-empty array");
    std::sort(spec.mu_grid.begin(), spec.mu_grid.end());
    if (s.contains("algorithms")) {
      if (!s["algorithms"].is_array() || s["algorithms"].empty()) bad_field("scan.algorithms", "must be a non-empty array of names");
      spec.algorithms.clear();
      for (std::size_t i = 0; i < s["algorithms"].size(); ++i) {
        const auto& a = s["algorithms"][i];
        const std::string path = "scan.algorithms[" + std::to_string(i) + "]";
        if (!a.is_string()) bad_field(path, "must be a string");
        try {
          spec.algorithms.push_back(engine_from_string(a.get<std::string>()));
        } catch (const Error&) {
          bad_field(path, "unknown algorithm '" + a.get<std::string>() + "'");
        }
        if (spec.algorithms.back() == EngineKind::exact_diffusion_adaptive)
          bad_field(path, "stability scans use a scalar step size; '" + a.get<std::string>() + "' is not supported");
      }
    }
    spec.refine_rel_tol = get_positive(s, "refine_rel_tol", "scan", spec.refine_rel_tol);
    spec.max_iters = get_count(s, "max_iters", "scan", spec.max_iters);
    spec.stop_threshold = get_positive(s, "stop_threshold", "scan", spec.stop_threshold);
    c.scan = spec;
  }
  if (doc.contains("two_agent")) {
    const auto& t = doc["two_agent"];
    if (!t.is_object()) bad_field("two_agent", "must be an object");
    auto& ta = c.two_agent;
    ta.a = get_positive(t, "a", "two_agent", ta.a);
    if (ta.a >= 1.0) bad_field("two_agent.a", "must lie in (0, 1)");
    ta.sigma2 = get_positive(t, "sigma2", "two_agent", ta.sigma2);
    ta.mu = get_positive(t, "mu", "two_agent", ta.mu);
    ta.mu_e = get_positive(t, "mu_e", "two_agent", ta.mu_e);
    ta.iterations = get_count(t, "iterations", "two_agent", ta.iterations);
    ta.stop_threshold = get_positive(t, "stop_threshold", "two_agent", ta.stop_threshold);
    if (t.contains("w_o")) {
      try {
        ta.w_o = vector_from_json(t["w_o"]);
      } catch (const Error&) {
        bad_field("two_agent.w_o", "must be an array of numbers");
      }
      if (ta.w_o.size() == 0) bad_field("two_agent.w_o", "must be non-empty");
    }
  }
  if (doc.contains("analyze")) c.analyze = parse_analyze(doc["analyze"], base_dir);
  return c;
}

ExperimentConfig load_config(const std::string& path, const Overrides& overrides) {
  auto doc = read_json_file(path);
  return parse_config(doc, fs::path(path).parent_path().string(), overrides);
}

Graph build_graph(const GraphSpec& spec) {
  if (spec.kind == "file") return Graph::load_json(spec.path);
  if (spec.n == 0) bad_field("graph.n", "must be given (or implied by model.n_agents)");
  if (spec.kind == "random") return random_connected_graph(spec.n, spec.edge_probability, spec.seed);
  if (spec.kind == "path") return Graph::path(spec.n);
  if (spec.kind == "ring") return Graph::ring(spec.n);
  if (spec.kind == "star") return Graph::star(spec.n);
  return Graph::complete(spec.n);
}

CombinationMatrix build_matrix(const Graph& graph, const MatrixSpec& spec) {
  if (spec.rule == "metropolis") return build_metropolis(graph);
  if (spec.rule == "averaging") return build_averaging(graph);
  if (spec.rule == "two_agent") {
    if (graph.n() != 2) bad_field("matrix.rule", "'two_agent' needs a 2-node graph");
    return two_agent_matrix(spec.a);
  }
  return CombinationMatrix::load_csv(graph, spec.path);
}

StepSizes resolve_steps(const AlgorithmSpec& spec, const CostModel& model, const Network& net) {
  const auto n = net.n();
  if (spec.mu_vector) {
    if (static_cast<std::size_t>(spec.mu_vector->size()) != n) fail(ErrorKind::configuration, "algorithm '" + spec.label + "': mu vector length must equal N");
    StepSizes s;
    s.mu = *spec.mu_vector;
    s.mu_o = s.mu.maxCoeff();
    s.beta = 1.0 / s.mu_o;
    return s;
  }
  if (spec.mu_o) return StepSizes::from_q(model.q(), net.perron().p, *spec.mu_o);
  if (spec.bound_fraction) {
    auto hb = model.hessian_bounds();
    double bound = spec.engine == EngineKind::extra ? extra_step_bound(net, hb.nu, hb.delta).mu_bound
                                                    : diffusion_step_bound(net, Eigen::VectorXd::Ones(n), hb.nu, hb.delta, hb.k_o).mu_bound;
    return StepSizes::uniform(n, *spec.bound_fraction * bound);
  }
  if (!spec.mu) fail(ErrorKind::configuration, "algorithm '" + spec.label + "' has no step size");
  return StepSizes::uniform(n, *spec.mu);
}

bool is_stable(const RunResult& r) {
  if (r.status == RunStatus::converged) return true;
  if (r.status == RunStatus::diverged || r.trace.size() < 3) return false;
  const double late = r.trace.back().rel_error;
  const double mid = r.trace[r.trace.size() / 2].rel_error;
  return late < mid && late < 1.0;
}

ScanResult stability_scan(const CostModel& model, const Network& net, const ScanSpec& spec, int jobs) {
  if (!model.constant_hessian()) fail(ErrorKind::configuration, "stability scans need a quadratic model");
  if (spec.mu_grid.empty()) fail(ErrorKind::configuration, "stability scan needs a non-empty mu grid");
  std::vector<double> grid = spec.mu_grid;
  std::sort(grid.begin(), grid.end());
  const Eigen::VectorXd target_o = solve_centralized(*model.with_weights(Eigen::VectorXd::Ones(net.n()))).w_star;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd w0(static_cast<Eigen::Index>(net.n()), static_cast<Eigen::Index>(model.dim()));
  for (Eigen::Index i = 0; i < w0.size(); ++i) w0.data()[i] = normal(rng);
  auto probe = [&](EngineKind engine, double mu) {
    RunOptions opt;
    opt.engine = engine;
    opt.steps = StepSizes::uniform(net.n(), mu);
    opt.max_iters = spec.max_iters;
    opt.stop_threshold = spec.stop_threshold;
    opt.w0 = w0;
    if (net.a.doubly_stochastic()) opt.target = target_o;
    auto r = run(model, net, opt);
    return ScanPoint{mu, engine, r.status, is_stable(r), false};
  };
  for (auto e : spec.algorithms) check_engine_inputs(e, model, net, StepSizes::uniform(net.n(), grid.front()));

  const std::size_t na = spec.algorithms.size(), ng = grid.size();
  std::vector<ScanPoint> grid_points(na * ng);
  parallel_for(na * ng, jobs, [&](std::size_t i) { grid_points[i] = probe(spec.algorithms[i / ng], grid[i % ng]); });

  std::vector<std::vector<ScanPoint>> refinements(na);
  std::vector<ScanSummary> summaries(na);
  parallel_for(na, jobs, [&](std::size_t a) {
    const auto engine = spec.algorithms[a];
    double lo = 0.0;
    std::optional<double> hi;
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& pt = grid_points[a * ng + g];
      if (pt.stable) {
        lo = pt.mu;
      } else {
        hi = pt.mu;
        break;
      }
    }
    if (hi) {
      while (*hi - lo > spec.refine_rel_tol * *hi) {
        const double mid = 0.5 * (lo + *hi);
        auto pt = probe(engine, mid);
        pt.refinement = true;
        refinements[a].push_back(pt);
        if (pt.stable) lo = mid;
        else hi = mid;
      }
    }
    summaries[a] = {engine, lo, hi};
  });
  ScanResult out;
  out.points = std::move(grid_points);
  for (auto& r : refinements) out.points.insert(out.points.end(), r.begin(), r.end());
  out.summaries = std::move(summaries);
  return out;
}

json analyze_network(const NetworkSpec& spec, const std::optional<HessianBounds>& bounds) {
  json rec;
  rec["label"] = spec.label;
  rec["rule"] = spec.matrix.rule;
  const Graph graph = build_graph(spec.graph);
  const CombinationMatrix cm = build_matrix(graph, spec.matrix);
  const auto n = cm.n();
  const auto& pd = cm.perron();
  rec["n"] = n;
  rec["edges"] = graph.edges().size();
  rec["lambda2"] = pd.lambda2;
  rec["lambdaN"] = pd.lambdaN;
  rec["rhoA"] = pd.rhoA;
  rec["perron"] = to_json(pd.p);
  const auto bal = check_balanced(cm, pd);
  rec["balanced"] = bal.balanced;
  rec["balance_violation"] = bal.violation;
  const bool sds = cm.symmetric(1e-12) && cm.doubly_stochastic();
  rec["symmetric_doubly_stochastic"] = sds;
  rec["degenerate"] = n == 1;
  rec["diagnostics"] = json::array();
  const HessianBounds hb = bounds.value_or(HessianBounds{1.0, 1.0, 0});
  rec["nu"] = hb.nu;
  rec["delta"] = hb.delta;
  rec["k_o"] = hb.k_o;
  for (const char* key : {"alpha_d", "alpha_e", "mu_bound_diffusion", "mu_bound_extra", "rho_diffusion_half_bound", "rho_extra_half_bound", "t_d_norm2",
                          "t_e_norm2", "closed_form", "norm_closed_form_residual", "norm_strict", "nullspace_certified", "v_zero", "decomposition_check"})
    rec[key] = nullptr;
  if (hb.k_o >= n) {
    rec["diagnostics"].push_back("k_o is out of range for this network; bounds skipped");
  }
  if (!bal.balanced) {
    rec["diagnostics"].push_back("matrix is not balanced (max |PA' - AP| = " + format_double(bal.violation) + "); V and all bounds are undefined");
    return rec;
  }
  Network net(cm);
  rec["v_zero"] = net.v->v.cwiseAbs().maxCoeff() == 0.0;
  rec["nullspace_certified"] = certify_nullspace(*net.v);
  if (n == 1) rec["diagnostics"].push_back("single agent: V = 0 and the step-size bounds are undefined");
  const auto sc = check_b_structure(net);
  rec["decomposition_check"] = {{"multiset_error", sc.multiset_error}, {"multiset_ok", sc.multiset_ok},   {"canonical_error", sc.canonical_error},
                   {"r_error", sc.r_error},               {"canonical_ok", sc.canonical_ok}, {"reconstruction_error", sc.reconstruction_error},
                   {"v_prime_full_rank", sc.v_prime_full_rank}};
  if (n > 1 && hb.k_o < n) {
    auto bd = diffusion_step_bound(net, Eigen::VectorXd::Ones(n), hb.nu, hb.delta, hb.k_o);
    rec["alpha_d"] = bd.alpha;
    rec["mu_bound_diffusion"] = bd.mu_bound;
    rec["rho_diffusion_half_bound"] = bd.rate(0.5 * bd.mu_bound);
  }
  if (sds) {
    auto nc = norm_comparison(cm);
    rec["t_d_norm2"] = nc.t_d_norm2;
    rec["t_e_norm2"] = nc.t_e_norm2;
    rec["closed_form"] = nc.closed_form;
    rec["norm_closed_form_residual"] = nc.residual;
    rec["norm_strict"] = nc.strict;
    if (n > 1) {
      auto be = extra_step_bound(net, hb.nu, hb.delta);
      rec["alpha_e"] = be.alpha;
      rec["mu_bound_extra"] = be.mu_bound;
      rec["rho_extra_half_bound"] = be.rate(0.5 * be.mu_bound);
    }
  } else {
    rec["diagnostics"].push_back("matrix is not symmetric doubly-stochastic; EXTRA quantities skipped");
  }
  return rec;
}

json two_agent_report(const TwoAgentSpec& spec, RunResult* diffusion, RunResult* extra) {
  const auto tc = two_agent_case(spec.a, spec.sigma2, spec.mu, spec.mu_e);
  auto model = mse_identical_model(2, spec.sigma2, spec.w_o);
  Network net(two_agent_matrix(spec.a));
  auto simulate = [&](EngineKind engine, double mu) {
    RunOptions opt;
    opt.engine = engine;
    opt.steps = StepSizes::uniform(2, mu);
    opt.max_iters = spec.iterations;
    opt.stop_threshold = spec.stop_threshold;
    opt.target = spec.w_o;
    Eigen::MatrixXd w0 = Eigen::MatrixXd::Zero(2, spec.w_o.size());
    w0.row(0) = spec.w_o.transpose();
    opt.w0 = w0;
    return run(*model, net, opt);
  };
  auto rd = simulate(EngineKind::exact_diffusion, spec.mu);
  auto re = simulate(EngineKind::extra, spec.mu_e);
  json j;
  j["a"] = spec.a;
  j["sigma2"] = spec.sigma2;
  j["mu"] = spec.mu;
  j["mu_e"] = spec.mu_e;
  j["e_d"] = to_json(Eigen::MatrixXd(tc.e_d));
  j["e_e"] = to_json(Eigen::MatrixXd(tc.e_e));
  j["delta_disc"] = tc.delta_disc;
  j["delta_disc_extra"] = tc.delta_disc_extra;
  j["eigenvalues_d"] = complex_list({tc.eig_d.begin(), tc.eig_d.end()});
  j["eigenvalues_e"] = complex_list({tc.eig_e.begin(), tc.eig_e.end()});
  j["roots_d"] = complex_list({tc.roots_d.begin(), tc.roots_d.end()});
  j["roots_e"] = complex_list({tc.roots_e.begin(), tc.roots_e.end()});
  j["spectral_radius_d"] = tc.radius_d;
  j["spectral_radius_e"] = tc.radius_e;
  j["crosscheck_error"] = tc.crosscheck_error;
  j["extra_onset_mu"] = two_agent_extra_onset(spec.a, spec.sigma2);
  j["verdicts"] = {{"diffusion_stable", tc.diffusion_stable},
                   {"diffusion_sufficient", tc.diffusion_sufficient},
                   {"extra_stable", tc.extra_stable},
                   {"extra_predicted_unstable", tc.extra_predicted_unstable}};
  j["observed"] = {{"diffusion", status_json(rd)}, {"extra", status_json(re)}};
  auto agrees = [&](bool stable, const RunResult& r) {
    if (stable) return r.status != RunStatus::diverged;
    return r.status != RunStatus::converged;
  };
  j["consistent"] = agrees(tc.diffusion_stable, rd) && agrees(tc.extra_stable, re);
  if (diffusion) *diffusion = std::move(rd);
  if (extra) *extra = std::move(re);
  return j;
}

void cmd_run(const ExperimentConfig& config) {
  if (config.algorithms.empty()) bad_field("algorithms", "must list at least one algorithm");
  auto model = require_model(config);
  const Graph graph = build_graph(config.network.graph);
  Network net(build_matrix(graph, config.network.matrix));
  const auto dir = output_dir(config);
  graph.save_json((fs::path(dir) / "graph.json").string());
  net.a.save_csv((fs::path(dir) / "matrix.csv").string());
  save_model(*model, (fs::path(dir) / "model.json").string());

  std::vector<StepSizes> steps;
  for (const auto& spec : config.algorithms) {
    if (spec.tune) {
      steps.push_back(StepSizes::uniform(net.n(), spec.tune->grid.front()));
    } else {
      steps.push_back(resolve_steps(spec, *model, net));
    }
    check_engine_inputs(spec.engine, *model, net, steps.back());
  }

  const auto na = config.algorithms.size();
  std::vector<RunResult> results(na);
  std::vector<json> tuning(na);
  auto one_run = [&](EngineKind engine, const StepSizes& s) {
    RunOptions opt;
    opt.engine = engine;
    opt.steps = s;
    opt.max_iters = config.max_iters;
    opt.stop_threshold = config.stop_threshold;
    return run(*model, net, opt);
  };
  parallel_for(na, config.jobs, [&](std::size_t i) {
    const auto& spec = config.algorithms[i];
    if (!spec.tune) {
      results[i] = one_run(spec.engine, steps[i]);
      return;
    }
    struct Trial {
      double mu;
      RunResult r;
    };
    std::vector<Trial> trials;
    auto cost = [](const RunResult& r) {
      return r.status == RunStatus::converged ? static_cast<double>(r.trace.back().comm_units) : std::numeric_limits<double>::infinity();
    };
    auto try_mu = [&](double mu) {
      trials.push_back({mu, one_run(spec.engine, StepSizes::uniform(net.n(), mu))});
      return cost(trials.back().r);
    };
    for (double mu : spec.tune->grid) try_mu(mu);
    auto best_index = [&] {
      std::size_t b = 0;
      for (std::size_t t = 1; t < trials.size(); ++t)
        if (cost(trials[t].r) < cost(trials[b].r)) b = t;
      return b;
    };
    double span = spec.tune->grid.size() > 1 ? std::pow(spec.tune->grid.back() / spec.tune->grid.front(), 1.0 / (spec.tune->grid.size() - 1)) : 2.0;
    for (int round = 0; round < spec.tune->refine; ++round) {
      span = std::sqrt(span);
      const double centre = trials[best_index()].mu;
      try_mu(centre / span);
      try_mu(centre * span);
    }
    const auto b = best_index();
    json rows = json::array();
    for (const auto& t : trials)
      rows.push_back({{"mu", t.mu}, {"status", to_string(t.r.status)}, {"comm_units", t.r.trace.back().comm_units}, {"final_rel_error", nullable(t.r.final_rel_error, true)}});
    tuning[i] = {{"grid", spec.tune->grid}, {"refine", spec.tune->refine}, {"trials", rows}, {"selected_mu", trials[b].mu}};
    steps[i] = StepSizes::uniform(net.n(), trials[b].mu);
    results[i] = std::move(trials[b].r);
  });

  json summary;
  summary["n_agents"] = net.n();
  summary["dim"] = model->dim();
  summary["edges"] = graph.edges().size();
  summary["matrix_rule"] = config.network.matrix.rule;
  summary["max_iters"] = config.max_iters;
  summary["stop_threshold"] = config.stop_threshold;
  summary["comm_unit_scalars"] = 2 * model->dim() * graph.edges().size();
  summary["algorithms"] = json::array();
  for (std::size_t i = 0; i < na; ++i) {
    const auto& spec = config.algorithms[i];
    write_run(dir, spec.label, results[i]);
    json rec = status_json(results[i]);
    rec["label"] = spec.label;
    rec["algorithm"] = to_string(spec.engine);
    rec["mu"] = to_json(steps[i].mu);
    rec["mu_o"] = steps[i].mu_o;
    rec["comm_units"] = results[i].trace.back().comm_units;
    if (!tuning[i].is_null()) rec["tuning"] = tuning[i];
    summary["algorithms"].push_back(rec);
  }
  write_json_file((fs::path(dir) / "run_summary.json").string(), summary);
}

void cmd_stability_scan(const ExperimentConfig& config) {
  if (!config.scan) bad_field("scan", "is required for stability-scan");
  auto model = require_model(config);
  const Graph graph = build_graph(config.network.graph);
  Network net(build_matrix(graph, config.network.matrix));
  auto result = stability_scan(*model, net, *config.scan, config.jobs);
  const auto dir = output_dir(config);
  std::string csv = "mu,algorithm,status,stable,phase\n";
  for (const auto& p : result.points)
    csv += format_double(p.mu) + ',' + to_string(p.engine) + ',' + to_string(p.status) + ',' + (p.stable ? "true" : "false") + ',' + (p.refinement ? "refine" : "grid") + '\n';
  write_text_file((fs::path(dir) / "stability_scan.csv").string(), csv);
  json summary;
  summary["refine_rel_tol"] = config.scan->refine_rel_tol;
  summary["max_iters"] = config.scan->max_iters;
  summary["stop_threshold"] = config.scan->stop_threshold;
  summary["algorithms"] = json::array();
  for (const auto& s : result.summaries)
    summary["algorithms"].push_back({{"algorithm", to_string(s.engine)},
                                     {"max_stable_mu", s.max_stable_mu},
                                     {"first_unstable_mu", s.first_unstable_mu ? json(*s.first_unstable_mu) : json(nullptr)}});
  write_json_file((fs::path(dir) / "stability_summary.json").string(), summary);
}

void cmd_analyze(const ExperimentConfig& config) {
  std::optional<HessianBounds> hb;
  if (config.model) hb = model_from_json(*config.model)->hessian_bounds();
  std::vector<NetworkSpec> specs = config.analyze;
  if (specs.empty()) specs.push_back(config.network);
  std::vector<json> records(specs.size());
  parallel_for(specs.size(), config.jobs, [&](std::size_t i) { records[i] = analyze_network(specs[i], hb); });
  json report;
  report["records"] = records;
  write_json_file((fs::path(output_dir(config)) / "analyze_report.json").string(), report);
}

void cmd_two_agent(const ExperimentConfig& config) {
  RunResult rd, re;
  auto report = two_agent_report(config.two_agent, &rd, &re);
  const auto dir = output_dir(config);
  write_run(dir, "exact_diffusion", rd);
  write_run(dir, "extra", re);
  write_json_file((fs::path(dir) / "two_agent_report.json").string(), report);
}

}  // namespace exdiff
