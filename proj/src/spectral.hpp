#pragma once

#include <Eigen/Dense>

#include "graph.hpp"

namespace exdiff {

// Symmetric square root of (P - AP)/2.
struct VMatrix {
  Eigen::MatrixXd v;
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
};

VMatrix compute_v(const Eigen::MatrixXd& a, const Eigen::VectorXd& p);
inline VMatrix compute_v(const CombinationMatrix& a, const PerronData& p) { return compute_v(a.a(), p.p); }

bool certify_nullspace(const VMatrix& v);

struct GeneralEigen {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd right;  // unit 2-norm columns
  Eigen::MatrixXcd left;   // left.adjoint() * right = I
  double max_residual = 0.0;
};

constexpr Eigen::Index general_eig_max_dim = 200;

GeneralEigen general_eig(const Eigen::MatrixXd& m);

struct SymmetricEigen {
  Eigen::VectorXd values;  // descending
  Eigen::MatrixXd vectors;
};

SymmetricEigen symmetric_eig(const Eigen::MatrixXd& m);

double spectral_norm(const Eigen::MatrixXd& m);
double spectral_norm(const Eigen::MatrixXcd& m);

// Moore-Penrose inverse of a VMatrix, built from its eigenpairs.
Eigen::MatrixXd v_pseudo_inverse(const VMatrix& v);

}  // namespace exdiff
