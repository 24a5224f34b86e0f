#include "qpencil/forward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "qpencil/linalg.hpp"
#include "qpencil/parallel.hpp"

namespace qpencil {

namespace {

constexpr double kTwoPi = 2.0 * kPi;
constexpr double kNonrealTol = 1e-8;
constexpr double kMergeTol = 1e-5;
constexpr int kMaxQuadNodes = 1024;
constexpr int kMaxCentral = 3;

std::string index_label(SpectralIndex idx, int q) {
  return "(n=" + idx.str() + ", q=" + std::to_string(q + 1) + ")";
}

// A disc (or the central circle) and the indices whose roots it must hold.
struct Contour {
  cplx centre;
  double radius;
  std::vector<std::pair<SpectralIndex, int>> slots;  // ordered by expected real part
};

struct Moments {
  std::vector<cplx> s;  // s_k = (1/2 pi i) \oint v^k f'/f drho, v = (rho - c)/R
  int nodes = 0;
};

Moments contour_moments(const PencilSpec& spec, const Contour& c, int order, int start_nodes,
                        const OdeOptions& ode) {
  auto sums = [&](const std::vector<cplx>& logd, int stride, int n) {
    std::vector<cplx> s(std::size_t(order) + 1, 0.0);
    for (int j = 0; j < n; j += stride) {
      const cplx t = std::polar(1.0, kTwoPi * j / n);
      cplx tk = t * c.radius * logd[std::size_t(j)];
      for (int k = 0; k <= order; ++k) {
        s[std::size_t(k)] += tk;
        tk *= t;
      }
    }
    for (auto& v : s) v *= double(stride) / n;
    return s;
  };
  int n = start_nodes;
  std::vector<cplx> logd;
  for (;;) {
    std::vector<cplx> next(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      if (n > start_nodes && j % 2 == 0) {
        next[std::size_t(j)] = logd[std::size_t(j / 2)];
        continue;
      }
      const cplx rho = c.centre + std::polar(c.radius, kTwoPi * j / n);
      next[std::size_t(j)] = characteristic(spec, rho, true, ode).log_derivative;
    }
    logd = std::move(next);
    std::vector<cplx> full = sums(logd, 1, n), half = sums(logd, 2, n);
    double diff = 0.0;
    for (int k = 0; k <= order; ++k) diff = std::max(diff, std::abs(full[std::size_t(k)] - half[std::size_t(k)]));
    const double count = full[0].real();
    const bool settled_off = std::abs(full[0] - half[0]) < 0.05 && std::abs(count - std::round(count)) < 0.05 &&
                             std::lround(count) != order;
    if (settled_off) return {full, n};
    if (diff < 1e-5 || n >= kMaxQuadNodes) {
      if (diff >= 1e-5)
        fail(ErrorKind::Numerical, "argument principle did not converge on the contour at " +
                                       std::to_string(c.centre.real()));
      return {full, n};
    }
    n *= 2;
  }
}

// Roots inside the unit disc from power sums p_1..p_K (Newton identities).
std::vector<cplx> roots_from_power_sums(const std::vector<cplx>& p, int count) {
  std::vector<cplx> e(std::size_t(count) + 1, 0.0);
  e[0] = 1.0;
  for (int k = 1; k <= count; ++k) {
    cplx acc = 0.0;
    for (int i = 1; i <= k; ++i)
      acc += (i % 2 == 1 ? 1.0 : -1.0) * e[std::size_t(k - i)] * p[std::size_t(i)];
    e[std::size_t(k)] = acc / double(k);
  }
  // Monic polynomial u^K + c_{K-1} u^{K-1} + ... + c_0, c_{K-k} = (-1)^k e_k.
  Mat comp = Mat::Zero(count, count);
  for (int i = 1; i < count; ++i) comp(i, i - 1) = 1.0;
  for (int k = 1; k <= count; ++k) comp(count - k, count - 1) = -((k % 2 == 1 ? -1.0 : 1.0) * e[std::size_t(k)]);
  Eigen::ComplexEigenSolver<Mat> es(comp);
  std::vector<cplx> r(es.eigenvalues().data(), es.eigenvalues().data() + count);
  return r;
}

struct Root {
  cplx rho;
  int mult;
};

cplx newton_refine(const PencilSpec& spec, cplx rho, int mult, double tol, const OdeOptions& ode) {
  for (int it = 0; it < 40; ++it) {
    const cplx ld = characteristic(spec, rho, true, ode).log_derivative;
    if (!std::isfinite(ld.real()) || !std::isfinite(ld.imag()) || std::abs(ld) == 0.0) break;
    const cplx step = double(mult) / ld;
    rho -= step;
    if (std::abs(step) < tol * std::max(1.0, std::abs(rho))) break;
  }
  return rho;
}

// Empty when the count disagrees with the expected slots or a root drifts out.
std::optional<std::vector<Root>> roots_in_contour(const PencilSpec& spec, const Contour& c,
                                                  const ForwardOptions& opt, std::string& why) {
  const int expected = int(c.slots.size());
  Moments mo = contour_moments(spec, c, expected, opt.count_nodes, opt.ode);
  if (std::abs(mo.s[0] - double(expected)) > 0.25) {
    std::ostringstream os;
    os << "winding-number mismatch on the contour centred at " << c.centre.real() << " radius "
       << c.radius << ": counted " << mo.s[0].real() << ", expected " << expected;
    why = os.str();
    return std::nullopt;
  }
  std::vector<cplx> v = roots_from_power_sums(mo.s, expected);
  std::sort(v.begin(), v.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  std::vector<Root> roots;
  for (cplx u : v) {
    const cplx rho = c.centre + c.radius * u;
    if (!roots.empty() && std::abs(roots.back().rho / double(roots.back().mult) - rho) < kMergeTol) {
      roots.back().rho += rho;
      ++roots.back().mult;
    } else {
      roots.push_back({rho, 1});
    }
  }
  for (auto& r : roots) {
    r.rho /= double(r.mult);
    r.rho = newton_refine(spec, r.rho, r.mult, opt.root_tol, opt.ode);
    if (!(std::abs(r.rho - c.centre) < c.radius)) {
      why = "Newton refinement left the contour centred at " + std::to_string(c.centre.real());
      return std::nullopt;
    }
  }
  std::sort(roots.begin(), roots.end(), [](const Root& a, const Root& b) {
    if (std::abs(a.rho.real() - b.rho.real()) > 1e-12) return a.rho.real() < b.rho.real();
    return a.rho.imag() < b.rho.imag();
  });
  for (std::size_t k = 1; k < roots.size(); ++k)
    if (std::abs(roots[k].rho - roots[k - 1].rho) < kMergeTol) {
      why = "distinct root estimates converged together near " + std::to_string(roots[k].rho.real());
      return std::nullopt;
    }
  return roots;
}

// Winding number of det V(phi) along the rectangle boundary by phase unwrapping.
int rectangle_count(const PencilSpec& spec, double xl, double xr, double height, const OdeOptions& ode) {
  auto det = [&](cplx rho) { return characteristic(spec, rho, false, ode).det; };
  const cplx corners[5] = {{xl, -height}, {xr, -height}, {xr, height}, {xl, height}, {xl, -height}};
  double total = 0.0;
  for (int side = 0; side < 4; ++side) {
    const cplx a = corners[side], b = corners[side + 1];
    auto at = [&](double t) { return a + t * (b - a); };
    std::function<double(double, cplx, double, cplx, int)> arc = [&](double t0, cplx f0, double t1,
                                                                      cplx f1, int depth) {
      const double d = std::arg(f1 / f0);
      if (std::abs(d) <= 0.5 || depth > 30) return d;
      const double tm = 0.5 * (t0 + t1);
      const cplx fm = det(at(tm));
      return arc(t0, f0, tm, fm, depth + 1) + arc(tm, fm, t1, f1, depth + 1);
    };
    const int pieces = std::max(8, int(std::ceil(std::abs(b - a) * 4.0 * double(spec.m))));
    double t0 = 0.0;
    cplx f0 = det(a);
    for (int k = 1; k <= pieces; ++k) {
      const double t1 = double(k) / pieces;
      const cplx f1 = det(at(t1));
      total += arc(t0, f0, t1, f1, 0);
      t0 = t1;
      f0 = f1;
    }
  }
  return int(std::lround(total / kTwoPi));
}

}  // namespace

AsymptoticFrame asymptotic_frame(const PencilSpec& spec, const OdeOptions& opt, double cluster_tol) {
  const std::vector<double> end{kPi};
  const Mat pp = solve_P(spec, 1, end, opt).value[0];
  const Mat pm = solve_P(spec, -1, end, opt).value[0];
  const Eigen::Index m = spec.m;
  const Mat I = eye(m);
  const Mat A = pm.partialPivLu().solve((I + spec.H1).partialPivLu().solve((I - spec.H1) * pp)) *
                (I + spec.h1) * (I - spec.h1).inverse();
  const double u = unitarity_defect(A);
  if (u > 1e-8)
    fail(ErrorKind::Numerical, "asymptotic frame: A fails unitarity by " + std::to_string(u));
  return frame_from_unitary(A, cluster_tol);
}

AsymptoticFrame frame_from_unitary(const Mat& A, double cluster_tol) {
  const Eigen::Index m = A.rows();
  AsymptoticFrame f;
  f.A = A;
  NormalEig e = normal_eig(A);
  std::vector<double> om(static_cast<std::size_t>(m));
  for (Eigen::Index q = 0; q < m; ++q) {
    double w = std::arg(e.lambda(q)) / kTwoPi;
    if (w < 0) w += 1.0;
    if (w > 1.0 - 1e-9) w -= 1.0;
    om[std::size_t(q)] = std::max(w, 0.0);
  }
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return om[std::size_t(a)] < om[std::size_t(b)]; });
  f.W.resize(m, m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const int k = order[std::size_t(q)];
    f.W.row(q) = e.U.col(k).adjoint();
    f.mu.push_back(e.lambda(k));
    f.omega.push_back(om[std::size_t(k)]);
  }
  f.groups = cluster_sorted(f.omega, cluster_tol);
  return f;
}

CharacteristicSample characteristic(const PencilSpec& spec, cplx rho, bool with_derivative,
                                    const OdeOptions& opt) {
  const EndpointJet j = endpoint_jet(spec, rho, with_derivative ? 1 : 0, false, opt);
  CharacteristicSample c;
  c.rho = rho;
  const Mat B = kI * rho * spec.H1 + spec.H0;
  c.Vphi = j.dphi[0] + B * j.phi[0];
  Eigen::PartialPivLU<Mat> lu(c.Vphi);
  c.det = lu.determinant();
  c.cond = 1.0 / std::max(lu.rcond(), 1e-300);
  if (with_derivative) {
    c.dVphi = j.dphi[1] + B * j.phi[1] + kI * spec.H1 * j.phi[0];
    c.log_derivative = lu.solve(c.dVphi).trace();
  }
  return c;
}

LocateReport locate_eigenvalues(const PencilSpec& spec, const AsymptoticFrame& frame,
                                const ForwardOptions& opt) {
  const int N = opt.nmax;
  const int ng = int(frame.groups.size());
  std::vector<double> gw(static_cast<std::size_t>(ng));
  for (int g = 0; g < ng; ++g) gw[std::size_t(g)] = frame.group_omega(g);
  double sep = 1.0;
  for (int g = 0; g + 1 < ng; ++g) sep = std::min(sep, gw[std::size_t(g + 1)] - gw[std::size_t(g)]);
  if (ng > 1) sep = std::min(sep, gw.front() + 1.0 - gw.back());
  LocateReport rep;
  rep.disc_radius = std::min(0.5 * sep, 0.25);
  const double r = rep.disc_radius;

  auto disc = [&](int n, int g) {
    Contour c{cplx(n + gw[std::size_t(g)], 0.0), r, {}};
    for (int q : frame.groups[std::size_t(g)]) c.slots.push_back({SpectralIndex::make(n), q});
    return c;
  };
  // Indices |n| <= nc share one circle; roots there are labelled in real-part order.
  auto central = [&](int nc) {
    const double lo = -nc - 1.0 + gw.back() + r, hi = nc + 1.0 + gw.front() - r;
    Contour c{cplx(0.5 * (lo + hi), 0.0), 0.5 * (hi - lo), {}};
    for (int n = -nc; n <= nc; ++n) {
      if (n == 0) {
        for (int q = 0; q < int(spec.m); ++q) c.slots.push_back({SpectralIndex::make(0, -1), q});
        for (int q = 0; q < int(spec.m); ++q) c.slots.push_back({SpectralIndex::make(0, 1), q});
      } else {
        for (int q = 0; q < int(spec.m); ++q) c.slots.push_back({SpectralIndex::make(n), q});
      }
    }
    return c;
  };
  auto assign = [](const Contour& c, const std::vector<Root>& roots) {
    std::vector<LocatedEigenvalue> out;
    std::size_t slot = 0;
    for (const Root& rt : roots)
      for (int j = 0; j < rt.mult; ++j, ++slot)
        out.push_back({c.slots[slot].first, c.slots[slot].second, rt.rho, rt.mult, c.centre, c.radius});
    return out;
  };

  std::vector<Contour> contours;
  for (int n = -N; n <= N; ++n)
    if (n != 0)
      for (int g = 0; g < ng; ++g) contours.push_back(disc(n, g));
  std::vector<std::vector<LocatedEigenvalue>> found(contours.size());
  std::vector<std::string> why(contours.size());
  parallel_for(contours.size(), opt.threads, [&](std::size_t k) {
    auto roots = roots_in_contour(spec, contours[k], opt, why[k]);
    if (roots) found[k] = assign(contours[k], *roots);
  });
  int nc = 0;
  for (std::size_t k = 0; k < contours.size(); ++k)
    if (!why[k].empty()) nc = std::max(nc, int(std::lround(std::abs(contours[k].centre.real()))));
  if (nc > std::min(N, kMaxCentral)) {
    for (std::size_t k = 0; k < contours.size(); ++k)
      if (!why[k].empty() && std::abs(contours[k].centre.real()) > kMaxCentral + 0.5)
        fail(ErrorKind::Numerical, why[k]);
  }
  rep.central_n = nc;
  {
    const Contour c = central(nc);
    std::string reason;
    auto roots = roots_in_contour(spec, c, opt, reason);
    if (!roots) fail(ErrorKind::Numerical, reason);
    found.push_back(assign(c, *roots));
  }
  for (std::size_t k = 0; k < contours.size(); ++k)
    if (std::abs(contours[k].centre.real()) < nc + 0.5) found[k].clear();

  std::ostringstream nonreal;
  int worst_n = 0;
  for (auto& list : found)
    for (auto& v : list) {
      if (std::abs(v.rho.imag()) > kNonrealTol) {
        nonreal << "N=0 regime violated: nonreal eigenvalue at " << index_label(v.index, v.q)
                << ", rho = " << v.rho << "\n";
        worst_n = std::max(worst_n, v.index.abs() + 1);
      }
      if (v.mult > 1) worst_n = std::max(worst_n, v.index.abs() + 1);
      rep.values.push_back(v);
    }
  if (opt.strict_reality && !nonreal.str().empty()) fail(ErrorKind::Regime, nonreal.str());
  rep.smallest_real_abs_n = worst_n;
  std::sort(rep.values.begin(), rep.values.end(), [](const auto& a, const auto& b) {
    if (!(a.index == b.index)) return a.index < b.index;
    return a.q < b.q;
  });

  rep.expected_total = (2 * N + 2) * int(spec.m);
  if (opt.global_count) {
    const double mid = 0.5 * (1.0 + gw.front() + gw.back());
    rep.total_count = rectangle_count(spec, -N - 1 + mid, N + mid, opt.strip_height, opt.ode);
    if (rep.total_count != rep.expected_total) {
      std::ostringstream os;
      os << "global eigenvalue count " << rep.total_count << " on the strip, expected "
         << rep.expected_total;
      fail(ErrorKind::Numerical, os.str());
    }
  }
  return rep;
}

std::vector<LocatedEigenvalue> locate_at(const PencilSpec& spec, const AsymptoticFrame& frame,
                                         const std::vector<int>& ns, const ForwardOptions& opt) {
  const int ng = int(frame.groups.size());
  double sep = 1.0;
  for (int g = 0; g + 1 < ng; ++g) sep = std::min(sep, frame.group_omega(g + 1) - frame.group_omega(g));
  if (ng > 1) sep = std::min(sep, frame.group_omega(0) + 1.0 - frame.group_omega(ng - 1));
  const double r = std::min(0.5 * sep, 0.25);
  std::vector<Contour> contours;
  for (int n : ns) {
    if (n == 0) fail(ErrorKind::Validation, "locate_at: the zero index needs the central contour");
    for (int g = 0; g < ng; ++g) {
      Contour c{cplx(n + frame.group_omega(g), 0.0), r, {}};
      for (int q : frame.groups[std::size_t(g)]) c.slots.push_back({SpectralIndex::make(n), q});
      contours.push_back(std::move(c));
    }
  }
  std::vector<std::vector<LocatedEigenvalue>> found(contours.size());
  parallel_for(contours.size(), opt.threads, [&](std::size_t k) {
    const Contour& c = contours[k];
    std::string why;
    auto roots = roots_in_contour(spec, c, opt, why);
    if (!roots) fail(ErrorKind::Numerical, why);
    std::size_t slot = 0;
    for (const Root& rt : *roots)
      for (int j = 0; j < rt.mult; ++j, ++slot)
        found[k].push_back({c.slots[slot].first, c.slots[slot].second, rt.rho, rt.mult, c.centre, c.radius});
  });
  std::vector<LocatedEigenvalue> out;
  for (auto& l : found) out.insert(out.end(), l.begin(), l.end());
  return out;
}

WeylEvaluation weyl_matrix(const PencilSpec& spec, cplx rho, const OdeOptions& opt) {
  const EndpointJet j = endpoint_jet(spec, rho, 0, true, opt);
  const Mat B = kI * rho * spec.H1 + spec.H0;
  const Mat Vphi = j.dphi[0] + B * j.phi[0];
  const Mat VS = j.dS[0] + B * j.S[0];
  WeylEvaluation w;
  w.rho = rho;
  w.cond = condition_number(Vphi);
  const double scale = j.dphi[0].norm() + (1.0 + std::abs(rho) * spec.H1.norm() + spec.H0.norm()) * j.phi[0].norm();
  if (!(w.cond < 1e12) || !(sigma_min(Vphi) > 1e-11 * scale))
    fail(ErrorKind::Numerical, "weyl_matrix: too close to eigenvalue at rho = " +
                                   std::to_string(rho.real()) + (rho.imag() < 0 ? "" : "+") +
                                   std::to_string(rho.imag()) + "i");
  w.M = -Vphi.partialPivLu().solve(VS);
  return w;
}

ResidueResult contour_residue(const PencilSpec& spec, cplx rho0, double radius, int nodes,
                              const OdeOptions& opt) {
  int n = nodes;
  std::vector<Mat> vals;
  auto node = [&](int j, int total) { return std::polar(1.0, kTwoPi * (j + 0.5) / total); };
  for (;;) {
    // Half-offset nodes: the N/2 subset is every other node, a rotated rule.
    std::vector<Mat> Ms(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) Ms[std::size_t(j)] = weyl_matrix(spec, rho0 + radius * node(j, n), opt).M;
    auto sum = [&](int stride, int power) {
      Mat s = Mat::Zero(spec.m, spec.m);
      for (int j = 0; j < n; j += stride) s += Ms[std::size_t(j)] * std::pow(radius * node(j, n), power);
      return Mat(s * (double(stride) / n));
    };
    ResidueResult r;
    r.alpha = sum(1, 1);
    r.second = sum(1, 2);
    r.nodes = n;
    r.stability = (r.alpha - sum(2, 1)).norm();
    if (r.stability <= 1e-8 || n >= kMaxQuadNodes) {
      if (r.stability > 1e-8)
        fail(ErrorKind::Numerical, "residue unstable under node doubling at rho = " +
                                       std::to_string(rho0.real()) + ": contour too close to another pole");
      r.rank = numerical_rank(r.alpha, 1e-8);
      return r;
    }
    n *= 2;
  }
}

SpectralData weight_matrices(const PencilSpec& spec, const LocateReport& located,
                             const ForwardOptions& opt) {
  // Distinct poles, each covering the consecutive slots of one multiple root.
  struct Pole {
    std::vector<std::size_t> members;
    double radius;
    ResidueResult res;
  };
  std::vector<Pole> poles;
  const auto& v = located.values;
  std::vector<bool> used(v.size(), false);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (used[i]) continue;
    Pole p;
    for (std::size_t j = i; j < v.size(); ++j)
      if (!used[j] && std::abs(v[j].rho - v[i].rho) < 1e-13 * (1.0 + std::abs(v[i].rho))) {
        p.members.push_back(j);
        used[j] = true;
      }
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v.size(); ++j)
      if (std::abs(v[j].rho - v[i].rho) >= 1e-13 * (1.0 + std::abs(v[i].rho)))
        nearest = std::min(nearest, std::abs(v[j].rho - v[i].rho));
    p.radius = std::min(located.disc_radius, 0.5 * nearest);
    poles.push_back(std::move(p));
  }

  parallel_for(poles.size(), opt.threads, [&](std::size_t k) {
    Pole& p = poles[k];
    const LocatedEigenvalue& e = v[p.members.front()];
    if (std::abs(e.rho.imag()) > kNonrealTol) return;
    p.res = contour_residue(spec, e.rho, p.radius, opt.quad_nodes, opt.ode);
  });

  SpectralData sd;
  sd.m = spec.m;
  sd.nmax = opt.nmax;
  for (const Pole& p : poles) {
    const LocatedEigenvalue& e = v[p.members.front()];
    std::string reason;
    if (std::abs(e.rho.imag()) > kNonrealTol)
      reason = kNonrealPole;
    else if (p.res.second.norm() > 1e-6 * std::max(1.0, p.res.alpha.norm()))
      reason = kMultiplePole;
    for (std::size_t j : p.members) {
      const LocatedEigenvalue& x = v[j];
      if (!reason.empty()) {
        sd.excluded.push_back({x.index, x.q, x.rho, x.mult, reason});
        continue;
      }
      if (p.res.rank != x.mult)
        fail(ErrorKind::Numerical, "rank of the weight matrix at " + index_label(x.index, x.q) + " is " +
                                       std::to_string(p.res.rank) + ", multiplicity " +
                                       std::to_string(x.mult));
      sd.entries.push_back({x.index, x.q, x.rho, x.mult, p.res.alpha});
    }
  }
  sd.sort();
  return sd;
}

SpectralData forward_spectral(const PencilSpec& spec, const ForwardOptions& opt) {
  require_valid(spec, opt.require_selfadjoint);
  AsymptoticFrame frame = asymptotic_frame(spec, opt.ode);
  LocateReport loc = locate_eigenvalues(spec, frame, opt);
  SpectralData sd = weight_matrices(spec, loc, opt);
  sd.frame = std::move(frame);
  return sd;
}

Mat weyl_from_sd(const SpectralData& sd, cplx rho, const WeylTail* tail) {
  auto partial = [&](const SpectralData& d) {
    Mat s = Mat::Zero(d.m, d.m);
    for (const auto& e : d.entries) {
      if (std::abs(rho - e.rho) < 1e-6)
        fail(ErrorKind::Validation, "weyl_from_sd: evaluation at a pole " + index_label(e.index, e.q));
      s += e.alpha / (double(e.mult) * (rho - e.rho));
    }
    return s;
  };
  Mat M = partial(sd);
  if (tail && tail->model && tail->model_sd)
    M += weyl_matrix(*tail->model, rho, tail->ode).M - partial(*tail->model_sd);
  return M;
}

double verify_norming_integral(const PencilSpec& spec, cplx rho, int n, const OdeOptions& opt) {
  static const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  const std::vector<double> edges = spec.Q1.node_positions();
  std::vector<double> xs, ws;
  for (std::size_t c = 0; c + 1 < edges.size(); ++c) {
    const double a = edges[c], b = edges[c + 1];
    for (int k = 0; k < 5; ++k) {
      xs.push_back(0.5 * (a + b) + 0.5 * (b - a) * gx[k]);
      ws.push_back(0.5 * (b - a) * gw[k]);
    }
  }
  const SolutionField phi = solve_phi(spec, rho, xs, opt);
  Mat acc = Mat::Zero(spec.m, spec.m);
  for (std::size_t k = 0; k < xs.size(); ++k) acc += ws[k] * phi.value[k].adjoint() * phi.value[k];
  const Mat lim = 0.5 * kPi * (eye(spec.m) + spec.h1.adjoint() * spec.h1);
  return (acc - lim).norm() * std::abs(n);
}

}  // namespace qpencil
