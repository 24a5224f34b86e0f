#include <cmath>
#include <random>

#include "doctest.h"
#include "qpencil/fixtures.hpp"
#include "qpencil/linalg.hpp"
#include "qpencil/model.hpp"

using namespace qpencil;

namespace {

ForwardOptions small(int nmax) {
  ForwardOptions o;
  o.nmax = nmax;
  o.global_count = false;
  return o;
}

Mat skew_h1() {
  Mat h = Mat::Zero(2, 2);
  h(0, 1) = 0.2;
  h(1, 0) = -0.2;
  return h;
}

// Constant two-channel pencil with a nonzero h1; the model class contains it exactly.
PencilSpec constant_pair() {
  Mat T(2, 2);
  T << cplx(0, 0.3), cplx(0.03, 0.02), cplx(-0.03, 0.02), cplx(0, 0.1);
  const Mat C = -0.08 * eye(2);
  PencilSpec s = zero_pencil(2, 129);
  s.Q1 = GridFunction::constant(129, T);
  s.Q0 = GridFunction::constant(129, C);
  s.h1 = skew_h1();
  return s;
}

}  // namespace

TEST_CASE("h1 extraction on closed forms") {
  SpectralData sd = forward_spectral(fixtures::phase(0.25), small(10));
  // A pencil is its own tail, so the truncation vanishes.
  const PencilSpec self = fixtures::phase(0.25);
  SpectralData self_sd = sd;
  WeylTail tail{&self, &self_sd, {}};
  H1Estimate e = extract_h1(sd, &tail);
  CHECK(e.h1.norm() < 1e-6);

  PencilSpec p = constant_pair();
  H1Estimate direct = extract_h1([&](cplx rho) { return weyl_matrix(p, rho).M; });
  CHECK((direct.h1 - skew_h1()).norm() < 1e-6);
}

TEST_CASE("frame from spectral data") {
  SpectralData sd = forward_spectral(fixtures::phase(0.25), small(20));
  AsymptoticFrame f = build_frame_from_sd(sd, Mat::Zero(1, 1));
  CHECK(std::abs(f.omega[0] - 0.25) < 1e-3);
  CHECK(std::abs(f.A(0, 0) - kI) < 1e-3);

  PencilSpec p = constant_pair();
  SpectralData pd = forward_spectral(p, small(12));
  AsymptoticFrame exact = asymptotic_frame(p);
  AsymptoticFrame est = build_frame_from_sd(pd, p.h1);
  CHECK(est.groups.size() == 2);
  CHECK((est.A - exact.A).norm() < 1e-3);
}

TEST_CASE("algorithm 1 logarithm") {
  AsymptoticFrame f = frame_from_unitary(kI * eye(1), 1e-6);
  ModelRecipe r = algorithm1(f, Mat::Zero(1, 1));
  CHECK(std::abs(r.T(0, 0) - 0.25 * kI) < 1e-12);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  Mat a(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = cplx(g(rng), g(rng));
  const Mat U = nearest_unitary(a);
  ModelRecipe ru = algorithm1(frame_from_unitary(U, 1e-6), Mat::Zero(3, 3));
  CHECK((expm(2.0 * kPi * ru.T) - U).norm() < 1e-10);
  CHECK(skew_defect(ru.T) < 1e-12);
  CHECK(ru.branch_margin > 0.0);
}

TEST_CASE("algorithm 3 kappa scan avoids -1") {
  // O = -1 at kappa = 0; the scan must move away from it.
  const GridFunction known = GridFunction::constant(129, Mat::Zero(1, 1));
  AsymptoticFrame f = frame_from_unitary(-eye(1), 1e-6);
  KappaScan scan;
  ModelRecipe r = algorithm3(f, Mat::Zero(1, 1), known, 64, {}, &scan);
  CHECK(scan.samples.size() == 21);
  CHECK(std::abs(r.kappa) > 0.5);
  CHECK(scan.margin > 0.5);
  CHECK(skew_defect(r.H1) < 1e-12);
  const PencilSpec s = realize(r, 129);
  CHECK(validate(s, true).ok());
}

TEST_CASE("model recovers a constant pencil") {
  PencilSpec p = constant_pair();
  SpectralData sd = forward_spectral(p, small(20));
  ModelOptions mo;
  mo.nodes = 129;
  mo.forward = small(20);
  ModelResult r = estimate_model(sd, mo);
  CHECK(validate(r.spec, true).ok());
  CHECK((r.recipe.h1 - p.h1).norm() < 1e-4);
  CHECK((r.recipe.T - p.Q1[0]).norm() < 1e-4);
  CHECK((r.recipe.C0 - p.Q0[0]).norm() < 1e-4);
  CHECK(r.c0_residual < 1e-8);
  double worst = 0.0;
  for (const auto& e : sd.entries) {
    const SpectralEntry* m = r.sd.find(e.index, e.q);
    REQUIRE(m);
    worst = std::max(worst, std::abs(m->rho - e.rho));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("phase-well model tracks the target") {
  SpectralData sd = forward_spectral(fixtures::phase_well(129), small(20));
  ModelOptions mo;
  mo.nodes = 129;
  mo.forward = small(20);
  ModelResult r = estimate_model(sd, mo);
  CHECK(std::abs(r.recipe.T(0, 0) - 0.25 * kI) < 1e-4);
  CHECK(std::abs(r.recipe.C0(0, 0) + 0.1) < 1e-3);
  const SpectralEntry* a = sd.find(SpectralIndex::make(20), 0);
  const SpectralEntry* b = r.sd.find(SpectralIndex::make(20), 0);
  CHECK(std::abs(a->rho - b->rho) < 1e-6);
}
