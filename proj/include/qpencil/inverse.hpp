#pragma once

#include <optional>

#include "qpencil/model.hpp"

namespace qpencil {

// One spectral point of the section with its signed weight:
// target points carry alpha / mult, model points -alpha~ / mult~.
struct GroupPoint {
  cplx rho;
  Mat alpha;
  int side = 1;  // +1 target, -1 model, 0 target and model coincide
  SpectralIndex index;
  int q = 0;
};

struct Group {
  SpectralIndex index;
  std::vector<int> qs;       // J_q
  std::vector<int> members;  // into GroupIndex::points
  double diam = 0.0;
};

struct GroupIndex {
  Eigen::Index m = 1;
  int nmax = 0;
  std::vector<GroupPoint> points;
  std::vector<Group> groups;
  double diam_constant = 0.0;  // max diam(G_k) |k|
  std::size_t size() const { return points.size(); }
};

// Groups follow the model frame; entries with |n| > nmax are dropped on both sides.
GroupIndex build_group_index(const SpectralData& sd, const SpectralData& model_sd, int nmax,
                             double omega_tol = 0.02);

// Model-side solutions at every section point on the x-grid.
struct SectionFields {
  std::vector<double> xs;
  std::vector<SolutionField> phi;  // per point
  // Close pairs (i, j): D~(x, g_i, s_j) from the integral form.
  std::vector<std::pair<int, int>> close;
  std::vector<std::vector<Mat>> close_D;
  std::vector<int> slot;  // P x P, index into close or -1
  std::vector<Mat> Q1, dQ1, Q0;  // model coefficients on xs
};
SectionFields section_fields(const PencilSpec& model, const GroupIndex& gi, const std::vector<double>& xs,
                             const OdeOptions& ode = {}, int threads = 1);

// (I + R~(x)) as a block matrix: block (j, i) = delta_ji I + alpha_j D~(x, g_i, s_j).
// Also the x-derivative blocks alpha_j D~_x and alpha_j D~_xx when requested.
struct SectionOperator {
  Mat IR, dR, ddR;
  Mat psi, dpsi, ddpsi;  // m x (P m): phi~(x, g_i) and x-derivatives
};
SectionOperator assemble_R(const SectionFields& f, const GroupIndex& gi, std::size_t node, bool derivatives);

struct MainSolution {
  Mat z, dz, ddz;  // m x (P m)
  double cond = 0.0;
  double residual = 0.0;
};
MainSolution solve_main_equation(const SectionOperator& op, bool derivatives);

// z(x, rho) and w(x, rho) with two x-derivatives at one node.
struct EvalJet {
  cplx rho;
  Mat z, dz, ddz;
  Mat w, dw, ddw;
};

// Model-side data at an evaluation point on the grid.
struct EvalFields {
  cplx rho;
  SolutionField phi, Phi;
};
EvalFields eval_fields(const PencilSpec& model, cplx rho, const std::vector<double>& xs, const OdeOptions& ode);

EvalJet reconstruct_z_w(const SectionFields& f, const GroupIndex& gi, std::size_t node, const MainSolution& sol,
                        const EvalFields& e);

// H = Omega^dagger Omega from (z w*' - w z*')^{-1}, its derivative, and a = Omega^{-1} Omega'.
struct OmegaJet {
  Mat H, dH, a;
  double zw_defect = 0.0;  // ||z w* - w z*||
};
OmegaJet omega_jet(const EvalJet& j);

// Omega' = a Omega from Omega(xs[first]) = I over xs[first..last].
std::vector<Mat> integrate_omega(const std::vector<double>& xs, const std::vector<Mat>& a, std::size_t first,
                                 std::size_t last);

// Coefficients at a node from phi = Omega z at two spectral points.
struct NodeCoefficients {
  Mat Q1, Q0;
  double conditioning = 0.0;  // smaller sigma_min(z) of the chosen pair
};
NodeCoefficients extract_node(const Mat& Omega, const Mat& a, const Mat& da, const EvalJet& ja,
                              const EvalJet& jb);
// h1, h0 from x = 0 (Omega = I), H1, H0 from x = pi.
std::pair<Mat, Mat> extract_left(const Mat& a0, const EvalJet& ja, const EvalJet& jb);
std::pair<Mat, Mat> extract_right(const Mat& Omega, const Mat& a, const EvalJet& ja, const EvalJet& jb);

// Replaces values within width of either end by a quadratic least-squares fit over
// [width, 3 width] from that end.
void extrapolate_edges(const std::vector<double>& xs, std::vector<Mat>& values, double width);

struct InverseOptions {
  int nmax = 20;
  int nodes = 257;
  ModelOptions model;
  double cond_limit = 1e10;
  double omega_floor = 0.25;  // sigma_min(Omega) below this ends a step
  double safety = 0.9;
  std::vector<double> rho_eval{0.37, 0.61, 0.83};
  double pole_gap = 0.05;
  int max_steps = 12;
  int threads = 1;
  // Nodes within edge_layer / nmax of 0 and pi take a quadratic fitted on the next two widths.
  double edge_layer = 3.0;
  // Boundary matrices as 2 X(nmax) - X(nmax / 2).
  bool boundary_richardson = true;
  // Replaces Algorithm 1 for the first step (model pencil and its spectral data).
  std::optional<PencilSpec> first_model;
  std::optional<SpectralData> first_model_sd;
};

struct NodeLog {
  double x = 0.0;
  int step = 0;
  double cond = 0.0;
  double residual = 0.0;
  double omega_sigma = 0.0;  // sigma_min(Omega) from H
  double zw_defect = 0.0;
};

struct StepLog {
  int k = 0;
  double delta_start = 0.0, delta_end = 0.0;
  std::string model;  // "algorithm 1", "algorithm 3", "given"
  double kappa = 0.0;
  double max_cond = 0.0, max_residual = 0.0;
  std::size_t points = 0;
  double diam_constant = 0.0;
  double h1_skew_defect = 0.0;
};

struct RunLog {
  std::vector<StepLog> steps;
  std::vector<NodeLog> nodes;
  double selfadjoint_defect = 0.0;  // largest projection applied
  std::vector<double> xs;
  std::vector<Mat> Omega;  // recovered, per node (reached nodes only)
};

struct InverseResult {
  PencilSpec spec;
  RunLog log;
};

// Algorithm 4; Algorithm 2 when the first step reaches pi.
InverseResult algorithm4(const SpectralData& sd, const InverseOptions& opt);

// Left side of R - R~ + Theta~ + R~ R = 0 on the section, as a section norm (test mode).
// The composition R~ R sums over inner when given (a larger section containing gi).
double verify_identity_fromcont4(double x, const GroupIndex& gi, const PencilSpec& spec, const PencilSpec& model,
                                 const OdeOptions& ode = {}, const GroupIndex* inner = nullptr);

// Omega(x) and Lambda(x) from the P fields of the two pencils (test mode).
struct OmegaLambda {
  std::vector<Mat> Omega, Lambda;
};
OmegaLambda exact_omega(const PencilSpec& spec, const PencilSpec& model, const std::vector<double>& xs,
                        const OdeOptions& ode = {});

}  // namespace qpencil
