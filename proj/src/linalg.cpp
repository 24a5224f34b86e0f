#include "qpencil/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace qpencil {

double sigma_min(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

double sigma_max(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  return lo > 0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

int numerical_rank(const Mat& a, double rel_tol) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * std::max(s(0), 1e-300)) ++r;
  return r;
}

NormalEig normal_eig(const Mat& a) {
  Eigen::ComplexSchur<Mat> schur(a);
  NormalEig out;
  out.U = schur.matrixU();
  const Mat& t = schur.matrixT();
  out.lambda = t.diagonal();
  out.offdiag = t.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm();
  return out;
}

Mat log_unitary(const Mat& u) {
  NormalEig e = normal_eig(u);
  Vec d(e.lambda.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = kI * std::arg(e.lambda(i));
  return e.U * d.asDiagonal() * e.U.adjoint();
}

Mat nearest_unitary(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

Mat expm(const Mat& a) { return a.exp(); }

}  // namespace qpencil
