#pragma once

#include "qpencil/ode.hpp"
#include "qpencil/spectral_data.hpp"

namespace qpencil {

struct ForwardOptions {
  int nmax = 20;
  OdeOptions ode;
  double root_tol = 1e-12;
  int count_nodes = 32;  // argument-principle start, doubled until stable
  int quad_nodes = 64;   // residue start, doubled until stable
  int threads = 1;
  bool require_selfadjoint = false;
  bool global_count = true;    // Rouche total on a strip around the window
  double strip_height = 2.0;
  bool strict_reality = true;  // nonreal roots raise Error(Regime)
};

AsymptoticFrame asymptotic_frame(const PencilSpec& spec, const OdeOptions& opt = {},
                                 double cluster_tol = 1e-6);
// Eigen-decomposition of a unitary A into the frame layout (omega ascending).
AsymptoticFrame frame_from_unitary(const Mat& A, double cluster_tol);

struct CharacteristicSample {
  cplx rho;
  Mat Vphi, dVphi;
  cplx det;
  cplx log_derivative;  // d/drho log det V(phi) = tr(V^-1 V')
  double cond = 0.0;
};
CharacteristicSample characteristic(const PencilSpec& spec, cplx rho, bool with_derivative,
                                    const OdeOptions& opt = {});

struct LocatedEigenvalue {
  SpectralIndex index;
  int q = 0;
  cplx rho;
  int mult = 1;
  cplx centre;
  double radius = 0.0;
};

struct LocateReport {
  std::vector<LocatedEigenvalue> values;  // sorted by (index, q)
  double disc_radius = 0.0;
  int total_count = -1;                   // strip count, -1 when not computed
  int expected_total = 0;
  int smallest_real_abs_n = 0;            // measured threshold for reality
  int central_n = 0;                      // |n| <= central_n resolved on one circle
};

LocateReport locate_eigenvalues(const PencilSpec& spec, const AsymptoticFrame& frame,
                                const ForwardOptions& opt);

// Roots in the asymptotic discs of the given indices only (n != 0).
std::vector<LocatedEigenvalue> locate_at(const PencilSpec& spec, const AsymptoticFrame& frame,
                                         const std::vector<int>& ns, const ForwardOptions& opt);

struct WeylEvaluation {
  cplx rho;
  Mat M;
  double cond = 0.0;
};
WeylEvaluation weyl_matrix(const PencilSpec& spec, cplx rho, const OdeOptions& opt = {});

struct ResidueResult {
  Mat alpha;
  Mat second;  // coefficient of (rho - rho0)^-2
  int rank = 0;
  int nodes = 0;
  double stability = 0.0;
};
ResidueResult contour_residue(const PencilSpec& spec, cplx rho0, double radius, int nodes,
                              const OdeOptions& opt = {});

// Residues for located eigenvalues; multiple poles go to sd.excluded.
SpectralData weight_matrices(const PencilSpec& spec, const LocateReport& located,
                             const ForwardOptions& opt);

// Frame, eigenvalues and weights in one call.
SpectralData forward_spectral(const PencilSpec& spec, const ForwardOptions& opt = {});

// Partial-fraction Weyl matrix from SD. With a model (pencil + its SD on the same
// index set), tail = M_model(rho) - sum over model entries, so it telescopes.
struct WeylTail {
  const PencilSpec* model = nullptr;
  const SpectralData* model_sd = nullptr;
  OdeOptions ode;
};
Mat weyl_from_sd(const SpectralData& sd, cplx rho, const WeylTail* tail = nullptr);

// |n| * || int phi^dagger phi dx - (pi/2)(I + h1^dagger h1) || at a real eigenvalue.
double verify_norming_integral(const PencilSpec& spec, cplx rho, int n, const OdeOptions& opt = {});

}  // namespace qpencil
