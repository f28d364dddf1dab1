#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "errors.hpp"
#include "io_util.hpp"

namespace exdiff {

namespace {

std::vector<Edge> normalize_edges(std::size_t n, std::vector<Edge> edges) {
  for (auto& e : edges) {
    if (e.first == e.second) fail(ErrorKind::construction, "self-loop edge (" + std::to_string(e.first) + ", " + std::to_string(e.first) + ")");
    if (e.first >= n || e.second >= n)
      fail(ErrorKind::construction, "edge (" + std::to_string(e.first) + ", " + std::to_string(e.second) + ") out of range for n = " + std::to_string(n));
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

Graph::Graph(std::size_t n, std::vector<Edge> edges) : n_(n), edges_(normalize_edges(n, std::move(edges))) {
  if (n_ == 0) fail(ErrorKind::construction, "graph must have at least one agent");
  if (!connected(n_, edges_)) fail(ErrorKind::construction, "graph is not connected");
}

bool Graph::connected(std::size_t n, const std::vector<Edge>& edges) {
  if (n == 0) return false;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::size_t components = n;
  for (const auto& [i, j] : edges) {
    if (i >= n || j >= n) continue;
    auto a = find_root(parent, i), b = find_root(parent, j);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

bool Graph::has_edge(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  return std::binary_search(edges_.begin(), edges_.end(), Edge{i, j});
}

std::size_t Graph::degree(std::size_t k) const {
  return static_cast<std::size_t>(std::count_if(edges_.begin(), edges_.end(), [k](const Edge& e) { return e.first == k || e.second == k; }));
}

std::vector<std::size_t> Graph::neighbors(std::size_t k) const {
  std::vector<std::size_t> out;
  for (const auto& [i, j] : edges_) {
    if (i == k) out.push_back(j);
    if (j == k) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Graph Graph::path(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, e);
}

Graph Graph::ring(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  if (n > 2) e.emplace_back(0, n - 1);
  return Graph(n, e);
}

Graph Graph::star(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 1; i < n; ++i) e.emplace_back(0, i);
  return Graph(n, e);
}

Graph Graph::complete(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, e);
}

Graph Graph::load_json(const std::string& path) {
  auto j = read_json_file(path);
  if (!j.is_object() || !j.contains("n") || !j.contains("edges"))
    fail(ErrorKind::configuration, "graph file '" + path + "' needs fields \"n\" and \"edges\"");
  if (!j["n"].is_number_integer() || j["n"].get<long long>() < 1) fail(ErrorKind::configuration, "graph file '" + path + "': \"n\" must be a positive integer");
  std::vector<Edge> edges;
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned())
      fail(ErrorKind::configuration, "graph file '" + path + "': each edge must be a pair of non-negative integers");
    edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }
  return Graph(j["n"].get<std::size_t>(), edges);
}

void Graph::save_json(const std::string& path) const {
  nlohmann::json j;
  j["n"] = n_;
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : edges_) j["edges"].push_back({a, b});
  write_json_file(path, j);
}

Graph random_connected_graph(std::size_t n, double edge_probability, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::construction, "random graph needs n >= 1");
  if (!(edge_probability > 0.0 && edge_probability <= 1.0)) fail(ErrorKind::construction, "edge probability must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(edge_probability);
  constexpr int max_rejections = 100;
  std::vector<Edge> edges;
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    edges.clear();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (coin(rng)) edges.emplace_back(i, j);
    if (Graph::connected(n, edges)) return Graph(n, edges);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t t = 1; t < n; ++t) {
    std::uniform_int_distribution<std::size_t> pick(0, t - 1);
    edges.emplace_back(order[pick(rng)], order[t]);
  }
  return Graph(n, edges);
}

PerronData compute_perron(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  if (n == 0 || a.cols() != n) fail(ErrorKind::construction, "combination matrix must be square and non-empty");
  PerronData out;
  if (n == 1) {
    out.p = Eigen::VectorXd::Ones(1);
    out.eigenvalues = Eigen::VectorXcd::Ones(1);
    return out;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  if (es.info() != Eigen::Success) fail(ErrorKind::spectral, "eigensolver failed on combination matrix");
  Eigen::VectorXcd ev = es.eigenvalues();
  std::vector<std::complex<double>> vals(ev.data(), ev.data() + n);
  std::sort(vals.begin(), vals.end(), [](auto x, auto y) { return x.real() != y.real() ? x.real() > y.real() : x.imag() > y.imag(); });
  out.eigenvalues = Eigen::Map<Eigen::VectorXcd>(vals.data(), n);

  Eigen::Index unit = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (std::abs(vals[i] - 1.0) < std::abs(vals[unit] - 1.0)) unit = i;
  if (std::abs(vals[unit] - 1.0) > 1e-9) fail(ErrorKind::spectral, "combination matrix has no eigenvalue at 1");
  out.rhoA = 0.0;
  std::vector<double> rest_real;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == unit) continue;
    if (std::abs(vals[i] - 1.0) <= 1e-9) fail(ErrorKind::spectral, "combination matrix is not primitive: repeated eigenvalue 1");
    if (std::abs(vals[i]) >= 1.0 - 1e-12)
      fail(ErrorKind::spectral, "combination matrix is not primitive: eigenvalue of unit modulus other than 1");
    out.rhoA = std::max(out.rhoA, std::abs(vals[i]));
    rest_real.push_back(vals[i].real());
  }
  out.lambda2 = *std::max_element(rest_real.begin(), rest_real.end());
  out.lambdaN = *std::min_element(rest_real.begin(), rest_real.end());

  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  bool done = false;
  if (1.0 - out.rhoA >= 1e-3) {
    for (int it = 0; it < 20000; ++it) {
      Eigen::VectorXd next = a * p;
      next /= next.sum();
      double step = (next - p).lpNorm<Eigen::Infinity>();
      p = next;
      if (step <= 1e-15) break;
    }
    done = (a * p - p).lpNorm<Eigen::Infinity>() <= 1e-12;
  }
  if (!done) {
    Eigen::MatrixXd sys = a - Eigen::MatrixXd::Identity(n, n);
    sys.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    p = sys.fullPivLu().solve(rhs);
  }
  if ((p.array() <= 0.0).any()) fail(ErrorKind::spectral, "combination matrix is not primitive: Perron vector is not strictly positive");
  p /= p.sum();
  if ((a * p - p).lpNorm<Eigen::Infinity>() > 1e-10) fail(ErrorKind::spectral, "Perron residual exceeds 1e-10");
  out.p = p;
  return out;
}

CombinationMatrix::CombinationMatrix(Graph graph, Eigen::MatrixXd a) : graph_(std::move(graph)), a_(std::move(a)) {
  const auto n = static_cast<Eigen::Index>(graph_.n());
  if (a_.rows() != n || a_.cols() != n)
    fail(ErrorKind::construction, "combination matrix is " + std::to_string(a_.rows()) + "x" + std::to_string(a_.cols()) + " but graph has " + std::to_string(n) + " agents");
  if (!a_.allFinite()) fail(ErrorKind::construction, "combination matrix has non-finite entries");
  if ((a_.array() < 0.0).any()) fail(ErrorKind::construction, "combination matrix has negative entries");
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::abs(a_.col(k).sum() - 1.0) > 1e-12) fail(ErrorKind::construction, "column " + std::to_string(k) + " does not sum to 1");
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index k = 0; k < n; ++k)
      if (l != k && a_(l, k) > 0.0 && !graph_.has_edge(l, k))
        fail(ErrorKind::construction, "entry (" + std::to_string(l) + ", " + std::to_string(k) + ") is positive but not an edge");
  if (!(a_.diagonal().array() > 0.0).any()) fail(ErrorKind::construction, "combination matrix needs at least one positive diagonal entry");
  perron_ = compute_perron(a_);
}

Eigen::MatrixXd CombinationMatrix::a_bar() const {
  return 0.5 * (Eigen::MatrixXd::Identity(a_.rows(), a_.cols()) + a_);
}

bool CombinationMatrix::symmetric(double tol) const { return (a_ - a_.transpose()).cwiseAbs().maxCoeff() <= tol; }

bool CombinationMatrix::doubly_stochastic(double tol) const {
  return (a_.rowwise().sum().array() - 1.0).abs().maxCoeff() <= tol;
}

CombinationMatrix CombinationMatrix::load_csv(const Graph& graph, const std::string& path) {
  return CombinationMatrix(graph, read_csv_matrix(path));
}

void CombinationMatrix::save_csv(const std::string& path) const { write_text_file(path, csv_matrix(a_)); }

CombinationMatrix build_metropolis(const Graph& graph) {
  const auto n = graph.n();
  std::vector<std::size_t> deg(n);
  for (std::size_t k = 0; k < n; ++k) deg[k] = graph.degree(k);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : graph.edges()) {
    double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
    a(i, j) = w;
    a(j, i) = w;
  }
  for (std::size_t k = 0; k < n; ++k) a(k, k) = 1.0 - a.col(k).sum();
  return CombinationMatrix(graph, a);
}

CombinationMatrix build_averaging(const Graph& graph) {
  const auto n = graph.n();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    auto nb = graph.neighbors(k);
    double w = 1.0 / static_cast<double>(nb.size() + 1);
    a(k, k) = w;
    for (auto l : nb) a(l, k) = w;
  }
  return CombinationMatrix(graph, a);
}

CombinationMatrix two_agent_matrix(double a) {
  if (!(a > 0.0 && a < 1.0)) fail(ErrorKind::construction, "two-agent weight a must lie in (0, 1)");
  Eigen::MatrixXd m(2, 2);
  m << a, 1.0 - a, 1.0 - a, a;
  return CombinationMatrix(Graph(2, {{0, 1}}), m);
}

BalanceCheck check_balanced(const Eigen::MatrixXd& a, const Eigen::VectorXd& p) {
  Eigen::MatrixXd pm = p.asDiagonal();
  double v = (pm * a.transpose() - a * pm).cwiseAbs().maxCoeff();
  return {v <= 1e-10, v};
}

}  // namespace exdiff
