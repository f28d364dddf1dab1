#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "graph.hpp"

namespace testing {

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline std::string scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("exdiff_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Random symmetric doubly-stochastic primitive matrix from lazy Metropolis weights on a random graph.
inline exdiff::CombinationMatrix random_symmetric(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> prob(0.2, 0.8);
  return exdiff::build_metropolis(exdiff::random_connected_graph(n, prob(rng), seed));
}

}  // namespace testing
