#pragma once

#include "qpencil/grid_function.hpp"

namespace qpencil {

// Y'' + (rho^2 I + 2 i rho Q1(x) + Q0(x)) Y = 0 on [0, pi],
// U(Y) = Y'(0) + (i rho h1 + h0) Y(0), V(Y) = Y'(pi) + (i rho H1 + H0) Y(pi).
struct PencilSpec {
  Eigen::Index m = 1;
  GridFunction Q1, Q0;
  Mat h1, h0, H1, H0;

  int nodes() const { return Q1.nodes(); }
  std::vector<double> breakpoints() const;
  // rho^2 I + 2 i rho Q1(x) + Q0(x), written into out (no allocation once sized).
  void coefficient(double x, cplx rho, Mat& out, Mat& work) const;
};

struct ValidationIssue {
  std::string condition;
  std::string location;
  double defect = 0.0;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  double selfadjoint_defect = 0.0;
  double condition_one_margin = 0.0;
  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

inline constexpr double kConditionOneFloor = 1e-10;
inline constexpr double kSelfAdjointTol = 1e-12;

ValidationReport validate(const PencilSpec& spec, bool require_selfadjoint,
                          double selfadjoint_tol = kSelfAdjointTol);
// Throws Error(Validation) carrying the report summary.
void require_valid(const PencilSpec& spec, bool require_selfadjoint);

// Projects onto condition (II); returns the largest correction applied.
double enforce_selfadjoint(PencilSpec& spec);

Mat boundary_U(const PencilSpec& spec, cplx rho, const Mat& y0, const Mat& dy0);
Mat boundary_V(const PencilSpec& spec, cplx rho, const Mat& ypi, const Mat& dypi);

PencilSpec zero_pencil(Eigen::Index m, int nodes = 257);
PencilSpec make_pencil(Eigen::Index m, int nodes, const std::function<Mat(double)>& q1,
                       const std::function<Mat(double)>& q0, Mat h1, Mat h0, Mat big_h1,
                       Mat big_h0);

// Largest sup-norm distances between coefficient sets (same grid).
struct PencilDistance {
  double Q1 = 0, Q0 = 0, h1 = 0, h0 = 0, H1 = 0, H0 = 0;
  double boundary() const;
};
PencilDistance distance(const PencilSpec& a, const PencilSpec& b);

}  // namespace qpencil
