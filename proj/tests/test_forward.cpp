#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "qpencil/fixtures.hpp"
#include "qpencil/forward.hpp"
#include "qpencil/linalg.hpp"

using namespace qpencil;

namespace {

ForwardOptions small(int nmax) {
  ForwardOptions o;
  o.nmax = nmax;
  return o;
}

PencilSpec diagonal_phase() {
  return make_pencil(
      2, 129,
      [](double) {
        Mat q = Mat::Zero(2, 2);
        q(0, 0) = cplx(0, 0.25);
        q(1, 1) = cplx(0, 0.1);
        return q;
      },
      [](double x) { return Mat(-0.1 * (1.0 + std::cos(x)) * eye(2)); }, Mat::Zero(2, 2),
      Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Zero(2, 2));
}

}  // namespace

TEST_CASE("asymptotic frame oracles") {
  AsymptoticFrame f0 = asymptotic_frame(zero_pencil(1));
  CHECK(std::abs(f0.omega[0]) < 1e-12);
  CHECK(f0.groups.size() == 1);
  CHECK((f0.A - eye(1)).norm() < 1e-12);

  AsymptoticFrame f1 = asymptotic_frame(fixtures::phase(0.25));
  CHECK(std::abs(f1.A(0, 0) - kI) < 1e-11);
  CHECK(std::abs(f1.omega[0] - 0.25) < 1e-11);

  AsymptoticFrame f2 = asymptotic_frame(diagonal_phase());
  REQUIRE(f2.groups.size() == 2);
  CHECK(std::abs(f2.omega[0] - 0.1) < 1e-11);
  CHECK(std::abs(f2.omega[1] - 0.25) < 1e-11);
  CHECK((f2.W * f2.A * f2.W.adjoint() - Mat(Eigen::Map<Vec>(f2.mu.data(), 2).asDiagonal())).norm() < 1e-8);
  CHECK((f2.projector(0) + f2.projector(1) - eye(2)).norm() < 1e-12);
}

TEST_CASE("Weyl matrix of the zero pencil") {
  const PencilSpec s = zero_pencil(1);
  for (cplx rho : {cplx(0.37, 0.0), cplx(2.5, 0.3), cplx(0.0, 3.0)}) {
    const cplx exact = std::cos(rho * kPi) / (rho * std::sin(rho * kPi));
    CHECK(std::abs(weyl_matrix(s, rho).M(0, 0) - exact) < 1e-10);
  }
  const cplx rho(0.0, 40.0);
  CHECK(std::abs(weyl_matrix(s, rho).M(0, 0) * kI * rho - 1.0) < 1e-10);
  CHECK_THROWS_AS(weyl_matrix(s, 2.0), Error);
}

TEST_CASE("Weyl matrix symmetry at real rho") {
  const PencilSpec s = fixtures::coupled_well();
  for (double r : {0.37, 1.7, -2.2}) {
    const Mat M = weyl_matrix(s, r).M;
    CHECK(hermitian_defect(M) < 1e-8);
  }
}

TEST_CASE("zero pencil spectrum with an excluded double pole") {
  ForwardOptions o = small(10);
  o.quad_nodes = 64;
  SpectralData sd = forward_spectral(zero_pencil(1), o);
  REQUIRE(sd.entries.size() == 20);
  REQUIRE(sd.excluded.size() == 2);
  CHECK(sd.excluded[0].reason == kMultiplePole);
  CHECK(std::abs(sd.excluded[0].rho) < 1e-6);
  for (const auto& e : sd.entries) {
    CHECK(std::abs(e.rho - double(e.index.n)) < 1e-8);
    CHECK(std::abs(e.alpha(0, 0) - 1.0 / (kPi * e.index.n)) < 1e-8);
    CHECK(e.mult == 1);
  }
}

TEST_CASE("constant phase eigenvalues follow the quadratic formula") {
  const PencilSpec s = fixtures::phase(0.25);
  AsymptoticFrame f = asymptotic_frame(s);
  ForwardOptions o = small(5);
  LocateReport rep = locate_eigenvalues(s, f, o);
  CHECK(rep.total_count == rep.expected_total);
  for (const auto& v : rep.values) {
    const int n = v.index.n;
    const double root = n != 0 ? 0.25 + (n > 0 ? 1 : -1) * std::sqrt(0.0625 + n * n) : 0.25 + v.index.sign * 0.25;
    CHECK(std::abs(v.rho - root) < 1e-10);
  }
  const auto e3 = std::find_if(rep.values.begin(), rep.values.end(),
                                [](const auto& v) { return v.index.n == 3; });
  CHECK(std::abs(e3->rho.real() - 3.26039864) < 1e-8);
}

TEST_CASE("weight matrices of a coupled self-adjoint pencil") {
  const PencilSpec s = fixtures::coupled_well(129);
  ForwardOptions o = small(8);
  SpectralData sd = forward_spectral(s, o);
  REQUIRE(sd.excluded.empty());
  REQUIRE(sd.entries.size() == std::size_t(2 * (2 * 8 + 2)));
  const AsymptoticFrame& f = *sd.frame;
  for (const auto& e : sd.entries) {
    CHECK(std::abs(e.rho.imag()) < 1e-8);
    CHECK(numerical_rank(e.alpha, 1e-8) == e.mult);
    CHECK(hermitian_defect(e.alpha) < 1e-8);
  }
  // pi n sum over the group tends to W^dagger I_q W (h1 = 0).
  double prev = 1e9;
  for (int n : {2, 4, 8}) {
    double worst = 0.0;
    for (std::size_t g = 0; g < f.groups.size(); ++g) {
      Mat acc = Mat::Zero(2, 2);
      for (int q : f.groups[g]) {
        const SpectralEntry* e = sd.find(SpectralIndex::make(n), q);
        REQUIRE(e != nullptr);
        acc += e->alpha / double(e->mult);
      }
      worst = std::max(worst, (kPi * n * acc - f.projector(int(g))).norm());
    }
    CHECK(worst * n < 2.0);
    CHECK(worst < prev);
    prev = worst;
  }
}

TEST_CASE("diagonal pencil weights have rank one") {
  SpectralData sd = forward_spectral(diagonal_phase(), small(4));
  for (const auto& e : sd.entries) CHECK(numerical_rank(e.alpha, 1e-8) == 1);
}

TEST_CASE("norming integral") {
  CHECK(verify_norming_integral(zero_pencil(1), 3.0, 3) < 1e-9);
  const PencilSpec s = fixtures::phase(0.25);
  double worst = 0.0;
  for (int n = 2; n <= 20; n += 6) {
    const double rho = 0.25 + std::sqrt(0.0625 + n * n);
    worst = std::max(worst, verify_norming_integral(s, rho, n));
  }
  CHECK(worst < 5.0);
}

TEST_CASE("partial-fraction Weyl matrix") {
  const PencilSpec s = fixtures::phase_well(129);
  std::vector<double> err;
  for (int N : {10, 20, 40}) {
    ForwardOptions o = small(N);
    o.global_count = false;
    SpectralData sd = forward_spectral(s, o);
    err.push_back((weyl_from_sd(sd, 0.37) - weyl_matrix(s, 0.37).M).norm());
    if (N == 10) {
      WeylTail tail{&s, &sd, {}};
      CHECK((weyl_from_sd(sd, 0.37, &tail) - weyl_matrix(s, 0.37).M).norm() < 1e-12);
      const SpectralEntry& e = sd.entries.back();
      const cplx near = e.rho + 1e-4;
      CHECK(std::abs((weyl_from_sd(sd, near) * (near - e.rho))(0, 0) - e.alpha(0, 0)) < 1e-3);
    }
  }
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}
