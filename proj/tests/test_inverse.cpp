#include <cmath>

#include "doctest.h"
#include "qpencil/fixtures.hpp"
#include "qpencil/inverse.hpp"
#include "qpencil/linalg.hpp"

using namespace qpencil;

namespace {

ForwardOptions small(int nmax) {
  ForwardOptions o;
  o.nmax = nmax;
  o.global_count = false;
  return o;
}

// Q1 = 0, H1 = i h, Q0 = c: omega = atan(h) / pi for the frame of phase(a).
PencilSpec boundary_phase(double h, double c, int nodes) {
  PencilSpec s = zero_pencil(1, nodes);
  s.H1(0, 0) = cplx(0.0, h);
  s.Q0 = GridFunction::constant(nodes, Mat::Constant(1, 1, c));
  return s;
}

double omega_error(const InverseResult& r, double a) {
  double worst = 0.0;
  for (std::size_t k = 0; k < r.log.xs.size(); ++k)
    if (r.log.Omega[k].size()) worst = std::max(worst, std::abs(r.log.Omega[k](0, 0) - std::cos(a * r.log.xs[k])));
  return worst;
}

}  // namespace

TEST_CASE("m = 1 groups pair one target and one model point") {
  const PencilSpec p = fixtures::phase(0.25, 129);
  const PencilSpec mdl = boundary_phase(-1.0, -0.0625, 129);
  const GroupIndex gi = build_group_index(forward_spectral(p, small(8)), forward_spectral(mdl, small(8)), 8);
  CHECK(gi.groups.size() == 18);
  for (const Group& g : gi.groups) {
    REQUIRE(g.members.size() == 2);
    CHECK(gi.points[std::size_t(g.members[0])].side * gi.points[std::size_t(g.members[1])].side == -1);
  }
  CHECK(gi.diam_constant < 1.0);
}

TEST_CASE("incompatible model is rejected") {
  const PencilSpec p = fixtures::phase(0.25, 129);
  const SpectralData sd = forward_spectral(p, small(6));
  const SpectralData other = forward_spectral(fixtures::phase(0.1, 129), small(6));
  CHECK_THROWS_AS(build_group_index(sd, other, 6), Error);
}

TEST_CASE("main equation telescopes when the model is the target") {
  const PencilSpec p = fixtures::phase_well(129);
  const SpectralData sd = forward_spectral(p, small(8));
  const GroupIndex gi = build_group_index(sd, sd, 8);
  for (const auto& pt : gi.points) CHECK(pt.alpha.norm() == 0.0);
  const std::vector<double> xs = uniform_grid(129);
  const SectionFields f = section_fields(p, gi, xs);
  for (std::size_t node : {std::size_t(0), std::size_t(40), std::size_t(128)}) {
    const SectionOperator op = assemble_R(f, gi, node, true);
    CHECK((op.IR - Mat::Identity(op.IR.rows(), op.IR.cols())).norm() < 1e-12);
    const MainSolution sol = solve_main_equation(op, true);
    CHECK((sol.z - op.psi).norm() < 1e-10);
  }

  InverseOptions io;
  io.nmax = 8;
  io.nodes = 129;
  io.model.forward = small(8);
  io.first_model = p;
  io.first_model_sd = sd;
  io.edge_layer = 0.0;
  const InverseResult r = algorithm4(sd, io);
  REQUIRE(r.log.steps.size() == 1);
  double om = 0.0;
  for (const Mat& o : r.log.Omega) om = std::max(om, (o - eye(1)).norm());
  CHECK(om < 1e-8);
  const PencilDistance d = distance(p, r.spec);
  CHECK(d.Q1 < 1e-8);
  CHECK(d.Q0 < 1e-8);
  CHECK(d.h0 < 1e-8);
  CHECK(d.H0 < 1e-8);
  CHECK(verify_identity_fromcont4(1.0, gi, p, p) < 1e-12);
}

TEST_CASE("edge extrapolation keeps quadratics") {
  const std::vector<double> xs = uniform_grid(129);
  std::vector<Mat> v, want;
  for (double x : xs) want.push_back(Mat::Constant(1, 1, cplx(1.0 - 0.3 * x + 0.2 * x * x, 0.1 * x)));
  v = want;
  for (std::size_t k = 0; k < 4; ++k) v[k](0, 0) += 0.5;
  v[128](0, 0) -= 0.5;
  extrapolate_edges(xs, v, 0.15);
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) worst = std::max(worst, (v[k] - want[k]).norm());
  CHECK(worst < 1e-12);
}

TEST_CASE("omega oracle converges like 1/N") {
  const PencilSpec p = fixtures::phase(0.25, 129);
  const PencilSpec mdl = boundary_phase(-1.0, -0.0625, 129);
  std::vector<double> errs;
  for (int n : {10, 20}) {
    const SpectralData sd = forward_spectral(p, small(n));
    InverseOptions io;
    io.nmax = n;
    io.nodes = 129;
    io.model.forward = small(n);
    io.first_model = mdl;
    const InverseResult r = algorithm4(sd, io);
    errs.push_back(omega_error(r, 0.25));
    for (const NodeLog& l : r.log.nodes) CHECK(l.zw_defect < 1e-8);
  }
  CHECK(errs[0] < 2e-2);
  CHECK(errs[1] < 0.6 * errs[0]);
}

TEST_CASE("identity defect shrinks with the inner section") {
  const PencilSpec p = fixtures::phase(0.25, 129);
  const PencilSpec mdl = boundary_phase(-1.0, -0.0625, 129);
  const SpectralData sd = forward_spectral(p, small(20)), msd = forward_spectral(mdl, small(20));
  const GroupIndex gi = build_group_index(sd, msd, 4);
  const GroupIndex in10 = build_group_index(sd, msd, 10), in20 = build_group_index(sd, msd, 20);
  const double a = verify_identity_fromcont4(1.5, gi, p, mdl, {}, nullptr);
  const double b = verify_identity_fromcont4(1.5, in10, p, mdl, {}, nullptr);
  const double c = verify_identity_fromcont4(1.5, in20, p, mdl, {}, nullptr);
  CHECK(b < a);
  CHECK(c < b);
}

TEST_CASE("round trip of the phase well") {
  const PencilSpec p = fixtures::phase_well(129);
  const SpectralData sd = forward_spectral(p, small(10));
  InverseOptions io;
  io.nmax = 10;
  io.nodes = 129;
  io.model.forward = small(10);
  io.model.nodes = 129;
  const InverseResult r = algorithm4(sd, io);
  const PencilDistance d = distance(p, r.spec);
  CHECK(r.log.steps.size() == 1);
  CHECK(r.log.steps[0].model == "algorithm 1");
  CHECK(d.Q1 < 1e-4);
  CHECK(d.Q0 < 1e-2);
  CHECK(d.h0 < 1e-3);
  CHECK(d.H0 < 1e-3);
  CHECK(validate(r.spec, true).ok());
}

TEST_CASE("algorithm 4 splits the interval when Omega degenerates") {
  // Omega = cos(0.6 x) drops below the 0.25 floor near x = 2.2.
  const double a = 0.6;
  const PencilSpec p = fixtures::phase(a, 129);
  const SpectralData sd = forward_spectral(p, small(10));
  InverseOptions io;
  io.nmax = 10;
  io.nodes = 129;
  io.model.forward = small(10);
  io.model.nodes = 129;
  io.first_model = boundary_phase(std::tan(0.4 * kPi), -a * a, 129);
  const InverseResult r = algorithm4(sd, io);
  REQUIRE(r.log.steps.size() >= 2);
  CHECK(r.log.steps[0].model == "given");
  CHECK(r.log.steps[1].model == "algorithm 3");
  CHECK(r.log.steps[0].delta_end < 2.3);
  CHECK(r.log.steps.back().delta_end == doctest::Approx(kPi));
  for (const NodeLog& l : r.log.nodes) CHECK(l.cond <= io.cond_limit);
  // The second step starts from its own model: Omega restarts at I.
  const std::size_t k = std::size_t(std::lround(r.log.steps[1].delta_start / kPi * 128.0));
  CHECK((r.log.Omega[k + 1] - eye(1)).norm() < 0.05);
}
