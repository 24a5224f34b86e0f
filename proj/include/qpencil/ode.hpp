#pragma once

#include "qpencil/pencil.hpp"

namespace qpencil {

struct OdeOptions {
  double tol = 1e-12;
};

enum class FieldKind { Phi, S, Psi, PPlus, PMinus, PhiAdjoint, Other };

// Values and x-derivatives of a matrix solution on a set of points.
// For PhiAdjoint the stored matrices are the row solution phi*(x, theta).
struct SolutionField {
  FieldKind kind = FieldKind::Other;
  cplx rho = 0.0;
  std::vector<double> x;
  std::vector<Mat> value;
  std::vector<Mat> deriv;
  std::size_t size() const { return x.size(); }
};

struct PhiS {
  SolutionField phi, S;
};

PhiS solve_phi_S(const PencilSpec& spec, cplx rho, const std::vector<double>& xs,
                 const OdeOptions& opt = {});
SolutionField solve_phi(const PencilSpec& spec, cplx rho, const std::vector<double>& xs,
                        const OdeOptions& opt = {});
SolutionField solve_psi(const PencilSpec& spec, cplx rho, const std::vector<double>& xs,
                        const OdeOptions& opt = {});
// Row solution of the adjoint equation with the phi-type initial data;
// equals phi(x, conj(theta))^dagger when condition (II) holds.
SolutionField solve_phi_adjoint(const PencilSpec& spec, cplx theta, const std::vector<double>& xs,
                                const OdeOptions& opt = {});
// P' = sign Q1 P, P(0) = I.
SolutionField solve_P(const PencilSpec& spec, int sign, const std::vector<double>& xs,
                      const OdeOptions& opt = {});

// <Z, Y> = Z' Y - Z Y' at every point; Z is a row solution field.
std::vector<Mat> wronskian(const SolutionField& z, const SolutionField& y);

// phi, S, and rho-derivatives of phi and S, at x = pi only.
struct EndpointJet {
  std::vector<Mat> phi, dphi;  // index k: k-th rho-derivative
  std::vector<Mat> S, dS;
};
EndpointJet endpoint_jet(const PencilSpec& spec, cplx rho, int order, bool with_S,
                         const OdeOptions& opt = {});

// k-th rho-derivative of phi on xs via the variational equations, k <= 2.
SolutionField param_derivative(const PencilSpec& spec, cplx rho, int k,
                               const std::vector<double>& xs, const OdeOptions& opt = {});

// D(x, rho, theta) = <phi*(x,theta), phi(x,rho)> / (rho - theta) and its x-derivative
// phi*(x,theta) ((rho+theta) I + 2 i Q1(x)) phi(x,rho).
struct KernelValues {
  std::vector<Mat> D, Dx;
  bool integral_form = false;
};
inline double kernel_switch(cplx rho) { return 1e-3 * (1.0 + std::abs(rho)); }

KernelValues kernel_D(const PencilSpec& spec, const std::vector<double>& xs, cplx rho,
                      cplx theta, const OdeOptions& opt = {});
// Integral form ih1 + int_0^x phi*(t,theta)((rho+theta)I + 2iQ1)phi(t,rho) dt, any rho, theta.
std::vector<Mat> kernel_D_integral(const PencilSpec& spec, const std::vector<double>& xs, cplx rho,
                                   cplx theta, const OdeOptions& opt = {});

// Uniform grid with n nodes on [0, pi].
std::vector<double> uniform_grid(int nodes);

}  // namespace qpencil
