// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [--allow-fail k]... [k]...
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <thread>

#include "json.hpp"
#include "qpencil/fixtures.hpp"
#include "qpencil/inverse.hpp"
#include "qpencil/io.hpp"
#include "qpencil/linalg.hpp"

using namespace qpencil;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int threads() { return int(std::max(1u, std::thread::hardware_concurrency())); }

ForwardOptions fwd(int nmax) {
  ForwardOptions o;
  o.nmax = nmax;
  o.threads = threads();
  return o;
}

Outcome weyl_closed_form() {
  const PencilSpec s = zero_pencil(1);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    // Ten real points between integers, ten off the axis.
    const cplx rho = k < 10 ? cplx(0.3 + 0.47 * k, 0.0) : cplx(-2.0 + 0.61 * (k - 10), 0.2 + 0.35 * (k - 10));
    const cplx exact = std::cos(rho * kPi) / (rho * std::sin(rho * kPi));
    worst = std::max(worst, std::abs(weyl_matrix(s, rho).M(0, 0) - exact) / std::abs(exact));
  }
  return {worst <= 1e-8, "max relative error " + fmt("%.2e", worst)};
}

Outcome zero_pencil_spectrum() {
  ForwardOptions o = fwd(20);
  const SpectralData sd = forward_spectral(zero_pencil(1), o);
  double er = 0.0, ea = 0.0, e4 = 0.0;
  int seen = 0;
  for (const SpectralEntry& e : sd.entries) {
    if (e.index.n < 1) continue;
    ++seen;
    er = std::max(er, std::abs(e.rho - double(e.index.n)));
    ea = std::max(ea, std::abs(e.alpha(0, 0) - 1.0 / (kPi * e.index.n)));
    // pi n alpha_n -> (I - h1)^-1 W^dagger I_q W (I + h1)^-1 = 1
    e4 = std::max(e4, std::abs(kPi * e.index.n * e.alpha(0, 0) - 1.0));
  }
  return {seen == 20 && er <= 1e-8 && ea <= 1e-6 && e4 <= 1e-5,
          "n=1..20: rho " + fmt("%.2e", er) + ", alpha " + fmt("%.2e", ea) + ", weight asymptotic " + fmt("%.2e", e4)};
}

Outcome shifted_phase() {
  const SpectralData sd = forward_spectral(fixtures::phase(0.25), fwd(20));
  double er = 0.0;
  int seen = 0;
  for (const SpectralEntry& e : sd.entries) {
    const int n = e.index.n;
    if (n == 0) continue;
    ++seen;
    const double root = 0.25 + (n > 0 ? 1.0 : -1.0) * std::sqrt(0.0625 + double(n) * n);
    er = std::max(er, std::abs(e.rho - root));
  }
  const AsymptoticFrame f = build_frame_from_sd(sd, Mat::Zero(1, 1));
  const double eo = std::abs(f.omega[0] - 0.25);
  return {seen == 40 && er <= 1e-8 && eo <= 1e-3, "eigenvalues " + fmt("%.2e", er) + ", omega " + fmt("%.2e", eo)};
}

Outcome invariants() {
  const std::vector<double> xs = uniform_grid(257);
  const OdeOptions ode;
  double unit = 0.0, wr = 0.0, herm = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const PencilSpec s = fixtures::random_selfadjoint(seed);
    for (int sign : {1, -1})
      for (const Mat& p : solve_P(s, sign, xs, ode).value) unit = std::max(unit, unitarity_defect(p));
    for (cplx rho : {cplx(2.3, 0.0), cplx(1.1, 0.7)}) {
      const SolutionField phi = solve_phi(s, rho, xs, ode);
      SolutionField row = solve_psi(s, std::conj(rho), xs, ode);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        row.value[k] = Mat(row.value[k].adjoint());
        row.deriv[k] = Mat(row.deriv[k].adjoint());
      }
      const std::vector<Mat> w = wronskian(row, phi);
      // Drift relative to the size of the two terms Z'Y and ZY'.
      double scale = 0.0;
      for (std::size_t k = 0; k < xs.size(); ++k)
        scale = std::max(scale, row.deriv[k].norm() * phi.value[k].norm() + row.value[k].norm() * phi.deriv[k].norm());
      for (const Mat& wk : w) wr = std::max(wr, (wk - w[0]).norm() / scale);
    }
    for (double r : {0.37, 1.43, -2.61}) herm = std::max(herm, hermitian_defect(weyl_matrix(s, r, ode).M));
  }
  return {unit <= 1e-10 && wr <= 10.0 * ode.tol && herm <= 1e-8,
          "unitarity " + fmt("%.2e", unit) + ", Wronskian drift " + fmt("%.2e", wr) + ", M - M* " + fmt("%.2e", herm)};
}

Outcome rates() {
  const PencilSpec s = fixtures::coupled_well();
  const SpectralData sd = forward_spectral(s, fwd(20));
  const AsymptoticFrame f = asymptotic_frame(s);
  std::vector<double> shift(21, 0.0), weight(21, 0.0);
  for (const SpectralEntry& e : sd.entries) {
    const int n = e.index.abs();
    if (n < 5) continue;
    shift[std::size_t(n)] =
        std::max(shift[std::size_t(n)], std::abs(e.rho - double(e.index.n) - f.omega[std::size_t(e.q)]) * n);
  }
  const Mat lo = (eye(2) - s.h1).inverse(), hi = (eye(2) + s.h1).inverse();
  for (int n = 5; n <= 20; ++n)
    for (int sg : {1, -1})
      for (std::size_t g = 0; g < f.groups.size(); ++g) {
        Mat a = Mat::Zero(2, 2);
        for (int q : f.groups[g])
          if (const SpectralEntry* e = sd.find(SpectralIndex::make(sg * n), q)) a += e->alpha / double(e->mult);
        const Mat d = kPi * double(sg * n) * a - lo * f.projector(int(g)) * hi;
        weight[std::size_t(n)] = std::max(weight[std::size_t(n)], d.norm() * n);
      }
  // No growth: the top quarter stays within 25% of the bottom quarter.
  auto band = [](const std::vector<double>& v, int a, int b) {
    return *std::max_element(v.begin() + a, v.begin() + b + 1);
  };
  const double s0 = band(shift, 5, 9), s1 = band(shift, 16, 20);
  const double w0 = band(weight, 5, 9), w1 = band(weight, 16, 20);
  return {s1 <= 1.25 * s0 && w1 <= 1.25 * w0,
          "n|shift| " + fmt("%.3f", s0) + " -> " + fmt("%.3f", s1) + ", n|weight| " + fmt("%.3f", w0) + " -> " +
              fmt("%.3f", w1)};
}

Outcome telescoping() {
  const PencilSpec p = fixtures::phase_well(129);
  const SpectralData sd = forward_spectral(p, fwd(10));
  const GroupIndex gi = build_group_index(sd, sd, 10);
  const SectionFields f = section_fields(p, gi, uniform_grid(129));
  double rn = 0.0, zn = 0.0;
  for (std::size_t node = 0; node < 129; node += 8) {
    const SectionOperator op = assemble_R(f, gi, node, false);
    rn = std::max(rn, (op.IR - Mat::Identity(op.IR.rows(), op.IR.cols())).norm());
    zn = std::max(zn, (solve_main_equation(op, false).z - op.psi).norm());
  }
  InverseOptions io;
  io.nmax = 10;
  io.nodes = 129;
  io.threads = threads();
  io.model.forward = fwd(10);
  io.first_model = p;
  io.first_model_sd = sd;
  io.edge_layer = 0.0;
  const InverseResult r = algorithm4(sd, io);
  double om = 0.0;
  for (const Mat& o : r.log.Omega) om = std::max(om, (o - eye(1)).norm());
  const PencilDistance d = distance(p, r.spec);
  const double cd = std::max({d.Q1, d.Q0, d.h1, d.h0, d.H1, d.H0});
  return {rn <= 1e-12 && zn <= 1e-10 && om <= 1e-8 && cd <= 1e-8,
          "R " + fmt("%.1e", rn) + ", z - psi " + fmt("%.1e", zn) + ", Omega " + fmt("%.1e", om) +
              ", coefficients " + fmt("%.1e", cd)};
}

// Model for the phase(0.25) target: Q1 = 0, h1 = 0, H1 = -i, Q0 = -1/16.
PencilSpec omega_model(int nodes) {
  PencilSpec m = zero_pencil(1, nodes);
  m.H1(0, 0) = cplx(0.0, -1.0);
  m.Q0 = GridFunction::constant(nodes, Mat::Constant(1, 1, -0.0625));
  return m;
}

Outcome omega_oracle() {
  const int G = 257;
  const PencilSpec p = fixtures::phase(0.25, G);
  std::vector<std::vector<Mat>> om;
  std::vector<double> xs;
  for (int n : {20, 40}) {
    const ForwardOptions o = fwd(n);
    InverseOptions io;
    io.nmax = n;
    io.nodes = G;
    io.threads = threads();
    io.model.forward = o;
    io.first_model = omega_model(G);
    InverseResult r = algorithm4(forward_spectral(p, o), io);
    om.push_back(r.log.Omega);
    xs = r.log.xs;
  }
  // Omega error is O(1/N); one Richardson step in N.
  double raw = 0.0, rich = 0.0, inner = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!om[0][k].size() || !om[1][k].size()) return {false, "Omega not reached at x = " + fmt("%.3f", xs[k])};
    const cplx exact = std::cos(0.25 * xs[k]);
    const double e = std::abs(2.0 * om[1][k](0, 0) - om[0][k](0, 0) - exact);
    raw = std::max(raw, std::abs(om[1][k](0, 0) - exact));
    rich = std::max(rich, e);
    if (xs[k] <= kPi - 0.3) inner = std::max(inner, e);
  }
  return {rich <= 1e-4, "N=40 " + fmt("%.2e", raw) + ", Richardson 20/40 " + fmt("%.2e", rich) + " (" +
                            fmt("%.2e", inner) + " on [0, pi - 0.3])"};
}

struct Trip {
  PencilDistance d;
  double q() const { return std::max(d.Q1, d.Q0); }
  double b() const { return std::max({d.h1, d.h0, d.H1, d.H0}); }
};

Trip round_trip(const PencilSpec& p, int n) {
  const ForwardOptions o = fwd(n);
  InverseOptions io;
  io.nmax = n;
  io.nodes = p.nodes();
  io.threads = threads();
  io.model.forward = o;
  io.model.nodes = p.nodes();
  return {distance(p, algorithm4(forward_spectral(p, o), io).spec)};
}

Outcome full_round_trip() {
  bool ok = true;
  std::string detail;
  for (const auto& [name, p] : {std::pair<std::string, PencilSpec>{"phase_well", fixtures::phase_well()},
                                {"coupled_well", fixtures::coupled_well()}}) {
    const Trip a = round_trip(p, 10), b = round_trip(p, 20);
    ok = ok && b.d.Q1 <= 1e-2 && b.d.Q0 <= 1e-2 && b.b() <= 1e-3 && b.q() < a.q() && b.b() < a.b();
    detail += name + " Q " + fmt("%.2e", a.q()) + " -> " + fmt("%.2e", b.q()) + ", boundary " + fmt("%.2e", a.b()) +
              " -> " + fmt("%.2e", b.b()) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome identity() {
  const int G = 257, K = 160;
  const PencilSpec p = fixtures::phase(0.25, G), mdl = omega_model(G);
  ForwardOptions o = fwd(K);
  o.global_count = false;
  const SpectralData sd = forward_spectral(p, o), msd = forward_spectral(mdl, o);
  const GroupIndex gi = build_group_index(sd, msd, 9);
  if (gi.groups.size() != 20) return {false, "section has " + std::to_string(gi.groups.size()) + " groups"};
  const GroupIndex inner = build_group_index(sd, msd, K);
  double worst = 0.0;
  for (double x : {0.5, 1.5, 3.0}) worst = std::max(worst, verify_identity_fromcont4(x, gi, p, mdl, {}, &inner));
  return {worst <= 1e-6, "defect " + fmt("%.2e", worst) + " with the composition summed to |n| = 160"};
}

Outcome regime_guards() {
  std::string detail;
  bool ok = true;
  ForwardOptions o = fwd(6);
  const SpectralData sd = forward_spectral(zero_pencil(1), o);
  const bool dbl = std::any_of(sd.excluded.begin(), sd.excluded.end(), [](const ExcludedEntry& e) {
    return e.reason == kMultiplePole && std::abs(e.rho) < 1e-6 && e.mult == 2;
  });
  const bool kept = std::none_of(sd.entries.begin(), sd.entries.end(),
                                 [](const SpectralEntry& e) { return e.index.is_zero(); });
  ok = dbl && kept;
  detail = std::string("double pole ") + (dbl && kept ? "excluded" : "not reported");

  nlohmann::json j = nlohmann::json::parse(sd_to_json(sd));
  j["entries"][0]["rho"][1] = 0.3;
  try {
    (void)sd_from_json(j.dump());
    ok = false;
    detail += ", nonreal pole accepted";
  } catch (const Error& e) {
    const bool regime = e.kind() == ErrorKind::Regime;
    ok = ok && regime;
    detail += regime ? ", nonreal pole rejected (regime)" : ", nonreal pole rejected with the wrong kind";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"closed-form Weyl function", weyl_closed_form},
      {"zero pencil eigenvalues and weights", zero_pencil_spectrum},
      {"shifted phase eigenvalues and omega", shifted_phase},
      {"unitarity, Wronskian, Weyl symmetry", invariants},
      {"asymptotic rates", rates},
      {"main equation telescoping", telescoping},
      {"Omega oracle", omega_oracle},
      {"full round trip", full_round_trip},
      {"operator identity", identity},
      {"regime guards", regime_guards},
  };
  std::set<int> allowed, only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--allow-fail" && i + 1 < argc)
      allowed.insert(std::atoi(argv[++i]));
    else
      only.insert(std::atoi(argv[i]));
  }
  int bad = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", id, r.pass ? "PASS" : "FAIL", criteria[k].first.c_str(),
                r.detail.c_str(), secs);
    std::fflush(stdout);
    if (!r.pass && !allowed.count(id)) ++bad;
  }
  return bad == 0 ? 0 : 1;
}
