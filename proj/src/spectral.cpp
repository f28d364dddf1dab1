#include "spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "errors.hpp"

namespace exdiff {

SymmetricEigen symmetric_eig(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) fail(ErrorKind::precondition, "symmetric_eig needs a square matrix");
  Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) fail(ErrorKind::spectral, "symmetric eigensolver did not converge");
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

VMatrix compute_v(const Eigen::MatrixXd& a, const Eigen::VectorXd& p) {
  auto bal = check_balanced(a, p);
  if (!bal.balanced) fail(ErrorKind::precondition, "matrix is not balanced (violation " + std::to_string(bal.violation) + ")");
  Eigen::MatrixXd pm = p.asDiagonal();
  auto eig = symmetric_eig(0.5 * (pm - a * pm));
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) < -1e-8) fail(ErrorKind::precondition, "(P - AP)/2 is not positive semidefinite: eigenvalue " + std::to_string(eig.values(i)));
    if (eig.values(i) < 1e-12) eig.values(i) = 0.0;
  }
  VMatrix out;
  out.u = eig.vectors;
  out.sigma = eig.values;
  out.v = out.u * out.sigma.cwiseSqrt().asDiagonal() * out.u.transpose();
  out.v = 0.5 * (out.v + out.v.transpose()).eval();
  return out;
}

bool certify_nullspace(const VMatrix& v) {
  const auto n = v.v.rows();
  auto eig = symmetric_eig(v.v);
  Eigen::Index zero_count = 0, zero_index = -1;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(eig.values(i)) <= 1e-10) {
      ++zero_count;
      zero_index = i;
    }
  if (zero_count != 1) return false;
  Eigen::VectorXd ones = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  return std::abs(eig.vectors.col(zero_index).normalized().dot(ones)) >= 1.0 - 1e-8;
}

GeneralEigen general_eig(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  if (n != m.cols()) fail(ErrorKind::precondition, "general_eig needs a square matrix");
  if (n > general_eig_max_dim) fail(ErrorKind::precondition, "general_eig dimension " + std::to_string(n) + " exceeds cap 200");
  GeneralEigen out;
  if (n == 0) return out;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, true);
  if (es.info() != Eigen::Success)
    fail(ErrorKind::spectral, "eigensolver did not converge within " + std::to_string(es.getMaxIterations() * n) + " iterations");
  Eigen::VectorXcd vals = es.eigenvalues();
  Eigen::MatrixXcd vecs = es.eigenvectors();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    if (vals(x).real() != vals(y).real()) return vals(x).real() > vals(y).real();
    return vals(x).imag() > vals(y).imag();
  });
  out.values.resize(n);
  out.right.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = vals(order[i]);
    out.right.col(i) = vecs.col(order[i]).normalized();
  }
  Eigen::MatrixXcd mc = m.cast<std::complex<double>>();
  for (Eigen::Index i = 0; i < n; ++i)
    out.max_residual = std::max(out.max_residual, (mc * out.right.col(i) - out.values(i) * out.right.col(i)).norm());
  out.left = out.right.fullPivLu().inverse().adjoint();
  return out;
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

double spectral_norm(const Eigen::MatrixXcd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues()(0);
}

Eigen::MatrixXd v_pseudo_inverse(const VMatrix& v) {
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(v.sigma.size());
  for (Eigen::Index i = 0; i < v.sigma.size(); ++i)
    if (v.sigma(i) > 0.0) inv(i) = 1.0 / std::sqrt(v.sigma(i));
  return v.u * inv.asDiagonal() * v.u.transpose();
}

}  // namespace exdiff
