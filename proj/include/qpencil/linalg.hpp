#pragma once

#include "qpencil/types.hpp"

namespace qpencil {

double sigma_min(const Mat& a);
double sigma_max(const Mat& a);
double condition_number(const Mat& a);
int numerical_rank(const Mat& a, double rel_tol);

inline Mat skew_part(const Mat& a) { return 0.5 * (a - a.adjoint()); }
inline Mat hermitian_part(const Mat& a) { return 0.5 * (a + a.adjoint()); }
inline double skew_defect(const Mat& a) { return (a + a.adjoint()).norm(); }
inline double hermitian_defect(const Mat& a) { return (a - a.adjoint()).norm(); }
inline double unitarity_defect(const Mat& a) {
  return (a.adjoint() * a - Mat::Identity(a.rows(), a.cols())).norm();
}

// Eigen-decomposition of a normal matrix a = U diag(lambda) U^dagger.
struct NormalEig {
  Mat U;
  Vec lambda;
  double offdiag = 0.0;
};
NormalEig normal_eig(const Mat& a);

// Principal logarithm of a unitary matrix: U diag(i arg lambda) U^dagger.
Mat log_unitary(const Mat& u);
Mat nearest_unitary(const Mat& a);
Mat expm(const Mat& a);

inline Mat eye(Eigen::Index m) { return Mat::Identity(m, m); }

}  // namespace qpencil
