#pragma once

#include <functional>
#include <optional>

#include "qpencil/forward.hpp"

namespace qpencil {

// Constant-phase model (Algorithm 1) or spliced model (Algorithm 3):
// Q1 = known Q1 on [0, delta], Q1(delta) + i kappa (x - delta) I beyond; Q0 = C0.
struct ModelRecipe {
  Mat h1, H1;
  Mat T;                              // Algorithm 1 phase, Q1 = T
  Mat C0;                             // constant Hermitian Q0
  Mat coupling;                       // cross-group part of C0, kept by match_first_order
  Mat slope;                          // Q0 = C0 + slope (x - pi / 2) when set
  std::optional<GridFunction> known;  // Q1 samples, used on nodes <= delta_node
  int delta_node = 0;
  double delta = 0.0;
  double kappa = 0.0;
  double log_defect = 0.0;    // ||exp(2 pi T) - O||
  double branch_margin = 0.0; // min |lambda_j(O) + 1|
};

PencilSpec realize(const ModelRecipe& r, int nodes);

// h1 from M(i tau) = (i rho)^-1 (I + h1)^-1 + ..., three-point Richardson over tau in {20, 40, 80}.
struct H1Estimate {
  Mat h1;
  double skew_defect = 0.0;  // discarded Hermitian part
};
H1Estimate extract_h1(const std::function<Mat(cplx)>& weyl, double hermitian_tol = 1e-3);
H1Estimate extract_h1(const SpectralData& sd, const WeylTail* tail = nullptr, double hermitian_tol = 1e-3);

// omega_q from the +-n averaged shifts, W^dagger I_q W from the weight asymptotics.
// With defect given, the unitarity failure is reported instead of thrown.
AsymptoticFrame build_frame_from_sd(const SpectralData& sd, const Mat& h1, double cluster_tol = 0.02,
                                    double* defect = nullptr);

// Per group: omega1 in rho_nq = n + omega_q + omega1 / n + ..., from the +-n antisymmetric part.
std::vector<double> first_order_shifts(const std::vector<LocatedEigenvalue>& values,
                                       const AsymptoticFrame& frame, int n_hi, int n_lo);
std::vector<double> first_order_shifts(const SpectralData& sd, const AsymptoticFrame& frame);

ModelRecipe algorithm1(const AsymptoticFrame& frame, const Mat& h1);

struct KappaScan {
  double kappa = 0.0;
  double margin = 0.0;
  std::vector<std::pair<double, double>> samples;
};
// known: Q1 samples on the target grid; delta = node(delta_node).
ModelRecipe algorithm3(const AsymptoticFrame& frame, const Mat& h1, const GridFunction& known,
                       int delta_node, const OdeOptions& ode = {}, KappaScan* scan = nullptr);

struct ModelOptions {
  int nodes = 257;
  ForwardOptions forward;
  double cluster_tol = 0.02;
  bool match_c0 = true;
  int c0_iterations = 6;
  int h1_iterations = 4;
  bool match_weights = true;
  int weight_iterations = 3;
};

// Adjusts recipe.C0 until the model's first-order shifts equal target.
int match_first_order(ModelRecipe& r, const AsymptoticFrame& frame, const std::vector<double>& target,
                      const ModelOptions& opt, double* residual = nullptr);

// Fits recipe.coupling and recipe.slope to the 1/n term of the target weights at
// |n| = nmax / 2, nmax. Returns the final residual norm.
double match_weights(ModelRecipe& r, const SpectralData& target, const AsymptoticFrame& frame,
                      const std::vector<double>& shifts, const ModelOptions& opt);

struct ModelResult {
  ModelRecipe recipe;
  PencilSpec spec;
  SpectralData sd;
  AsymptoticFrame frame;  // estimated from the target data
  std::vector<double> shifts;
  double h1_skew_defect = 0.0;
  int h1_iterations = 0;
  double c0_residual = 0.0;
};

// Algorithm 1 with the h1 fixed point: each pass builds a model and re-reads h1
// from the target Weyl matrix with that model as tail.
ModelResult estimate_model(const SpectralData& target, const ModelOptions& opt);

// Builds and forward-solves a model from a finished recipe (C0 matched when requested).
ModelResult finish_model(ModelRecipe recipe, const AsymptoticFrame& frame, const std::vector<double>& shifts,
                         const ModelOptions& opt);

}  // namespace qpencil
