#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace exdiff {

using Edge = std::pair<std::size_t, std::size_t>;

// Undirected connected graph. Edges are kept sorted with i < j.
class Graph {
 public:
  Graph(std::size_t n, std::vector<Edge> edges);

  std::size_t n() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool has_edge(std::size_t i, std::size_t j) const;
  std::size_t degree(std::size_t k) const;
  std::vector<std::size_t> neighbors(std::size_t k) const;

  static bool connected(std::size_t n, const std::vector<Edge>& edges);

  static Graph path(std::size_t n);
  static Graph ring(std::size_t n);
  static Graph star(std::size_t n);
  static Graph complete(std::size_t n);

  static Graph load_json(const std::string& path);
  void save_json(const std::string& path) const;

 private:
  std::size_t n_;
  std::vector<Edge> edges_;
};

Graph random_connected_graph(std::size_t n, double edge_probability, std::uint64_t seed);

struct PerronData {
  Eigen::VectorXd p;
  double lambda2 = 1.0;
  double lambdaN = 1.0;
  double rhoA = 0.0;
  Eigen::VectorXcd eigenvalues;
};

// Nonnegative left-stochastic matrix respecting a graph. a(l, k) scales data sent from l to k.
class CombinationMatrix {
 public:
  CombinationMatrix(Graph graph, Eigen::MatrixXd a);

  const Eigen::MatrixXd& a() const { return a_; }
  const Graph& graph() const { return graph_; }
  std::size_t n() const { return graph_.n(); }
  const PerronData& perron() const { return perron_; }
  Eigen::MatrixXd a_bar() const;
  bool symmetric(double tol = 1e-12) const;
  bool doubly_stochastic(double tol = 1e-12) const;

  static CombinationMatrix load_csv(const Graph& graph, const std::string& path);
  void save_csv(const std::string& path) const;

 private:
  Graph graph_;
  Eigen::MatrixXd a_;
  PerronData perron_;
};

CombinationMatrix build_metropolis(const Graph& graph);
CombinationMatrix build_averaging(const Graph& graph);
CombinationMatrix two_agent_matrix(double a);

PerronData compute_perron(const Eigen::MatrixXd& a);
inline const PerronData& perron_vector(const CombinationMatrix& a) { return a.perron(); }

struct BalanceCheck {
  bool balanced = false;
  double violation = 0.0;
};

BalanceCheck check_balanced(const Eigen::MatrixXd& a, const Eigen::VectorXd& p);
inline BalanceCheck check_balanced(const CombinationMatrix& a, const PerronData& p) {
  return check_balanced(a.a(), p.p);
}

}  // namespace exdiff
