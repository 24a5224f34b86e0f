#include <cmath>

#include "doctest.h"
#include "qpencil/dop853.hpp"
#include "qpencil/fixtures.hpp"
#include "qpencil/linalg.hpp"
#include "qpencil/ode.hpp"

using namespace qpencil;

namespace {

double max_diff(const std::vector<Mat>& a, const std::function<Mat(std::size_t)>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b(k)).norm());
  return d;
}

Mat scalar(cplx v) { return Mat::Constant(1, 1, v); }

}  // namespace

TEST_CASE("dense output of a rotating oscillator") {
  Dop853<Mat> solver({1e-12, 1e-14});
  Mat y = Mat::Constant(1, 1, 1.0);
  std::vector<double> xs{0.0, 0.3, 1.1, 2.0, 2.5};
  std::vector<cplx> got(xs.size());
  solver.integrate([](double, const Mat& v, Mat& dv) { dv = kI * v; }, 0.0, 2.5, y, xs,
                   [&](std::size_t k, double, const Mat& v) { got[k] = v(0, 0); });
  for (std::size_t k = 0; k < xs.size(); ++k) CHECK(std::abs(got[k] - std::exp(kI * xs[k])) < 1e-11);
}

TEST_CASE("zero pencil closed forms") {
  const PencilSpec s = zero_pencil(1, 65);
  const auto xs = uniform_grid(65);
  for (cplx rho : {cplx(3.2, 0.0), cplx(0.7, 0.4), cplx(12.0, -0.3)}) {
    PhiS f = solve_phi_S(s, rho, xs);
    CHECK(max_diff(f.phi.value, [&](std::size_t k) { return scalar(std::cos(rho * xs[k])); }) < 1e-10);
    CHECK(max_diff(f.S.value, [&](std::size_t k) { return scalar(std::sin(rho * xs[k]) / rho); }) < 1e-10);
    CHECK(max_diff(f.phi.deriv, [&](std::size_t k) { return scalar(-rho * std::sin(rho * xs[k])); }) <
          1e-9 * std::abs(rho));
    SolutionField psi = solve_psi(s, rho, xs);
    CHECK(max_diff(psi.value, [&](std::size_t k) { return scalar(std::cos(rho * (kPi - xs[k]))); }) < 1e-10);
    CHECK(max_diff(psi.deriv, [&](std::size_t k) { return scalar(rho * std::sin(rho * (kPi - xs[k]))); }) <
          1e-9 * std::abs(rho));
  }
}

TEST_CASE("constant phase pencil: phi = cos kx with k^2 = rho^2 - rho/2") {
  const PencilSpec s = fixtures::phase(0.25, 129);
  const auto xs = uniform_grid(129);
  for (cplx rho : {cplx(0.9, 0.0), cplx(5.3, 0.1)}) {
    const cplx k = std::sqrt(rho * rho - 0.5 * rho);
    SolutionField phi = solve_phi(s, rho, xs);
    CHECK(max_diff(phi.value, [&](std::size_t i) { return scalar(std::cos(k * xs[i])); }) < 1e-10);
  }
}

TEST_CASE("P+ and P- for constant Q1 are matrix exponentials and unitary") {
  const PencilSpec s = fixtures::coupled_well(129);
  const auto xs = uniform_grid(129);
  SolutionField pp = solve_P(s, +1, xs), pm = solve_P(s, -1, xs);
  const Mat q1 = s.Q1[0];
  CHECK(max_diff(pp.value, [&](std::size_t k) { return expm(q1 * xs[k]); }) < 1e-10);
  CHECK(max_diff(pm.value, [&](std::size_t k) { return expm(-q1 * xs[k]); }) < 1e-10);
  double u = 0.0;
  for (const Mat& p : pp.value) u = std::max(u, unitarity_defect(p));
  CHECK(u < 1e-10);
}

TEST_CASE("Wronskian of psi-dagger and phi is constant") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PencilSpec s = fixtures::random_selfadjoint(seed, 129);
    const auto xs = uniform_grid(129);
    const cplx rho(2.3, 0.0);
    SolutionField phi = solve_phi(s, rho, xs);
    SolutionField z = solve_phi_adjoint(s, rho, xs);
    SolutionField psi = solve_psi(s, std::conj(rho), xs);
    SolutionField psi_row = psi;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      psi_row.value[k] = psi.value[k].adjoint();
      psi_row.deriv[k] = psi.deriv[k].adjoint();
    }
    auto w = wronskian(psi_row, phi);
    double dev = 0.0;
    for (const Mat& wk : w) dev = std::max(dev, (wk - w[0]).norm());
    CHECK(dev < 1e-10 * std::max(1.0, w[0].norm()));
    // phi*(x, theta) = phi(x, conj theta)^dagger under condition (II)
    SolutionField phic = solve_phi(s, std::conj(cplx(1.7, 0.2)), xs);
    SolutionField adj = solve_phi_adjoint(s, cplx(1.7, 0.2), xs);
    CHECK(max_diff(adj.value, [&](std::size_t k) { return Mat(phic.value[k].adjoint()); }) < 1e-10);
    // <phi*(rho), phi(rho)> vanishes identically
    auto w0 = wronskian(z, phi);
    double zero = 0.0;
    for (const Mat& wk : w0) zero = std::max(zero, wk.norm());
    CHECK(zero < 1e-9);
  }
}

TEST_CASE("rho-derivatives from the variational system") {
  const PencilSpec s = zero_pencil(1, 65);
  const auto xs = uniform_grid(65);
  const cplx rho(2.1, 0.3);
  SolutionField d1 = param_derivative(s, rho, 1, xs);
  SolutionField d2 = param_derivative(s, rho, 2, xs);
  CHECK(max_diff(d1.value, [&](std::size_t k) { return scalar(-xs[k] * std::sin(rho * xs[k])); }) < 1e-10);
  CHECK(max_diff(d2.value, [&](std::size_t k) { return scalar(-xs[k] * xs[k] * std::cos(rho * xs[k])); }) <
        1e-9);

  const PencilSpec r = fixtures::random_selfadjoint(7, 129);
  const double eps = 1e-3;
  auto at = [&](double e) { return param_derivative(r, rho + e, 0, xs); };
  SolutionField p2 = at(2 * eps), p1 = at(eps), m1 = at(-eps), m2 = at(-2 * eps);
  SolutionField d = param_derivative(r, rho, 1, xs);
  CHECK(max_diff(d.value, [&](std::size_t k) {
          return Mat((-p2.value[k] + 8.0 * p1.value[k] - 8.0 * m1.value[k] + m2.value[k]) / (12 * eps));
        }) < 1e-8);
  EndpointJet j = endpoint_jet(r, rho, 1, true);
  CHECK((j.phi[1] - d.value.back()).norm() < 1e-10);
}

TEST_CASE("kernel D: quotient and integral forms agree") {
  const PencilSpec s = fixtures::random_selfadjoint(11, 129);
  const auto xs = uniform_grid(129);
  const cplx rho(3.1, 0.0), theta(3.12, 0.0);
  KernelValues q = kernel_D(s, xs, rho, theta);
  CHECK_FALSE(q.integral_form);
  auto v = kernel_D_integral(s, xs, rho, theta);
  CHECK(max_diff(q.D, [&](std::size_t k) { return v[k]; }) < 1e-8);
  CHECK((v[0] - kI * s.h1).norm() < 1e-14);
  KernelValues close = kernel_D(s, xs, rho, rho + 1e-5);
  CHECK(close.integral_form);
  // x-derivative matches a centred difference of D
  const double h = 1e-3;
  for (std::size_t k = 5; k + 5 < xs.size(); k += 17) {
    const double x = xs[k];
    auto w = kernel_D_integral(s, {x - 2 * h, x - h, x + h, x + 2 * h}, rho, theta);
    Mat fd = (w[0] - 8.0 * w[1] + 8.0 * w[2] - w[3]) / (12.0 * h);
    CHECK((fd - q.Dx[k]).norm() < 1e-7);
  }
}
