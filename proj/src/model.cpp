#include "qpencil/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "qpencil/linalg.hpp"

namespace qpencil {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

const SpectralEntry& entry(const SpectralData& sd, int n, int q) {
  const SpectralEntry* e = sd.find(SpectralIndex::make(n), q);
  if (!e) fail(ErrorKind::Validation, "spectral data lack the entry (n=" + std::to_string(n) + ", q=" +
                                          std::to_string(q + 1) + ")");
  return *e;
}

int usable_nmax(const SpectralData& sd) {
  int n = 0;
  for (const auto& e : sd.entries) n = std::max(n, e.index.abs());
  if (n < 4) fail(ErrorKind::Validation, "model construction needs spectral data with N_max >= 4");
  return n;
}

}  // namespace

PencilSpec realize(const ModelRecipe& r, int nodes) {
  const Eigen::Index m = r.h1.rows();
  const Mat zero = Mat::Zero(m, m);
  const Mat C0 = r.C0.size() ? r.C0 : zero;
  PencilSpec s;
  s.m = m;
  if (r.known) {
    if (r.known->nodes() != nodes) fail(ErrorKind::Validation, "splice grid differs from the model grid");
    const GridFunction& k = *r.known;
    const Mat base = k[r.delta_node];
    std::vector<Mat> q1(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i)
      q1[std::size_t(i)] = i <= r.delta_node
                               ? k[i]
                               : Mat(base + kI * r.kappa * (k.node(i) - r.delta) * eye(m));
    std::vector<int> br;
    if (r.delta_node > 0 && r.delta_node < nodes - 1) br.push_back(r.delta_node);
    s.Q1 = GridFunction(0.0, kPi, std::move(q1), br);
    s.Q0 = GridFunction(0.0, kPi, std::vector<Mat>(static_cast<std::size_t>(nodes), C0), br);
  } else {
    s.Q1 = GridFunction::constant(nodes, r.T);
    s.Q0 = GridFunction::constant(nodes, C0);
  }
  if (r.slope.size() && r.slope.norm() > 0.0) {
    std::vector<Mat> q0(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i)
      q0[std::size_t(i)] = C0 + (s.Q0.node(i) - 0.5 * kPi) * r.slope;
    s.Q0 = GridFunction(0.0, kPi, std::move(q0), s.Q0.breaks());
  }
  s.h1 = r.h1;
  s.h0 = zero;
  s.H1 = r.H1.size() ? r.H1 : zero;
  s.H0 = zero;
  return s;
}

H1Estimate extract_h1(const std::function<Mat(cplx)>& weyl, double hermitian_tol) {
  auto at = [&](double tau) {
    const Mat M = weyl(cplx(0.0, tau));
    return Mat((-tau * M).inverse() - eye(M.rows()));
  };
  const Mat h = (8.0 * at(80.0) - 6.0 * at(40.0) + at(20.0)) / 3.0;
  H1Estimate out;
  out.h1 = skew_part(h);
  out.skew_defect = hermitian_part(h).norm();
  if (out.skew_defect > hermitian_tol)
    fail(ErrorKind::Validation, "estimated h1 has a Hermitian part of norm " + std::to_string(out.skew_defect) +
                                    ": spectral data inconsistent with condition (II)");
  return out;
}

H1Estimate extract_h1(const SpectralData& sd, const WeylTail* tail, double hermitian_tol) {
  return extract_h1([&](cplx rho) { return weyl_from_sd(sd, rho, tail); }, hermitian_tol);
}

AsymptoticFrame build_frame_from_sd(const SpectralData& sd, const Mat& h1, double cluster_tol,
                                    double* defect_out) {
  const int N = usable_nmax(sd);
  const int M = N / 2;
  const Eigen::Index m = sd.m;
  auto omega_at = [&](int n, int q) {
    return 0.5 * ((entry(sd, n, q).rho.real() - n) + (entry(sd, -n, q).rho.real() + n));
  };
  std::vector<double> om(static_cast<std::size_t>(m));
  for (int q = 0; q < int(m); ++q) {
    double w = 2.0 * omega_at(N, q) - omega_at(M, q);
    w -= std::floor(w);
    if (w > 1.0 - 1e-9) w = 0.0;
    om[std::size_t(q)] = w;
  }
  // Entries are labelled by ascending real part inside each disc, so sorting keeps groups contiguous.
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int q = 0; q < int(m); ++q) order[std::size_t(q)] = q;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return om[std::size_t(a)] < om[std::size_t(b)]; });
  std::vector<double> sorted;
  for (int q : order) sorted.push_back(om[std::size_t(q)]);
  std::vector<std::vector<int>> groups = cluster_sorted(sorted, cluster_tol);
  if (groups.size() > 1 && sorted.front() + 1.0 - sorted.back() <= cluster_tol) {
    // Wrap-around cluster near omega = 0: fold the top group onto the bottom one.
    for (int k : groups.back()) groups.front().insert(groups.front().begin(), k);
    groups.pop_back();
  }
  const Mat I = eye(m);
  auto projector_at = [&](int n, const std::vector<int>& members) {
    Mat acc = Mat::Zero(m, m);
    for (int k : members) {
      const int q = order[std::size_t(k)];
      acc += kPi * n * entry(sd, n, q).alpha / double(entry(sd, n, q).mult);
      acc += kPi * (-n) * entry(sd, -n, q).alpha / double(entry(sd, -n, q).mult);
    }
    return Mat(0.5 * (I - h1) * acc * (I + h1));
  };
  Mat A = Mat::Zero(m, m);
  std::vector<double> gomega;
  for (const auto& g : groups) {
    Mat X = hermitian_part(2.0 * projector_at(N, g) - projector_at(M, g));
    double s = 0.0, c = 0.0;
    for (int k : g) {
      s += std::sin(kTwoPi * sorted[std::size_t(k)]);
      c += std::cos(kTwoPi * sorted[std::size_t(k)]);
    }
    const cplx mu = std::polar(1.0, std::atan2(s, c));
    A += mu * X;
  }
  const double defect = unitarity_defect(A);
  if (defect_out) *defect_out = defect;
  if (!defect_out && defect > 1e-2)
    fail(ErrorKind::Validation, "assembled A fails unitarity by " + std::to_string(defect) +
                                    ": spectral data too short or inconsistent");
  AsymptoticFrame f = frame_from_unitary(nearest_unitary(A), 1e-6);
  // Keep the data-driven grouping: eigenvalues of the projected A are exactly degenerate per group.
  f.groups = cluster_sorted(f.omega, std::max(cluster_tol, 1e-6));
  return f;
}

std::vector<double> first_order_shifts(const std::vector<LocatedEigenvalue>& values,
                                       const AsymptoticFrame& frame, int n_hi, int n_lo) {
  auto rho = [&](int n, int q) {
    for (const auto& v : values)
      if (v.index.n == n && v.q == q) return v.rho.real();
    fail(ErrorKind::Validation, "first-order shift needs (n=" + std::to_string(n) + ", q=" +
                                    std::to_string(q + 1) + ")");
  };
  std::vector<double> out;
  for (const auto& g : frame.groups) {
    auto at = [&](int n) {
      double s = 0.0;
      for (int q : g) s += 0.5 * n * ((rho(n, q) - n) - (rho(-n, q) + n));
      return s / double(g.size());
    };
    out.push_back((4.0 * at(n_hi) - at(n_lo)) / 3.0);
  }
  return out;
}

std::vector<double> first_order_shifts(const SpectralData& sd, const AsymptoticFrame& frame) {
  const int N = usable_nmax(sd);
  std::vector<LocatedEigenvalue> v;
  for (const auto& e : sd.entries) v.push_back({e.index, e.q, e.rho, e.mult, e.rho, 0.0});
  return first_order_shifts(v, frame, N, N / 2);
}

ModelRecipe algorithm1(const AsymptoticFrame& frame, const Mat& h1) {
  const Eigen::Index m = frame.dim();
  const Mat I = eye(m);
  const Mat O = frame.A * (I - h1) * (I + h1).inverse();
  ModelRecipe r;
  r.h1 = h1;
  r.H1 = Mat::Zero(m, m);
  r.C0 = Mat::Zero(m, m);
  NormalEig e = normal_eig(O);
  r.branch_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m; ++j) r.branch_margin = std::min(r.branch_margin, std::abs(e.lambda(j) + 1.0));
  r.T = skew_part(log_unitary(O) / kTwoPi);
  r.log_defect = (expm(kTwoPi * r.T) - O).norm();
  if (r.log_defect > 1e-8)
    fail(ErrorKind::Numerical, "algorithm 1: exp(2 pi T) misses O by " + std::to_string(r.log_defect));
  return r;
}

ModelRecipe algorithm3(const AsymptoticFrame& frame, const Mat& h1, const GridFunction& known,
                       int delta_node, const OdeOptions& ode, KappaScan* scan) {
  const Eigen::Index m = frame.dim();
  const Mat I = eye(m);
  ModelRecipe r;
  r.h1 = h1;
  r.H1 = Mat::Zero(m, m);
  r.C0 = Mat::Zero(m, m);
  r.known = known;
  r.delta_node = delta_node;
  r.delta = known.node(delta_node);
  const Mat core = frame.A * (I - h1) * (I + h1).inverse();
  const std::vector<double> end{kPi};
  KappaScan local;
  KappaScan& sc = scan ? *scan : local;
  sc = {};
  sc.margin = -1.0;
  Mat bestO;
  for (int k = 0; k <= 20; ++k) {
    r.kappa = -0.9 + 0.09 * k;
    const PencilSpec s = realize(r, known.nodes());
    const Mat pp = solve_P(s, 1, end, ode).value[0];
    const Mat pm = solve_P(s, -1, end, ode).value[0];
    const Mat O = pm * core * pp.inverse();
    NormalEig e = normal_eig(O);
    double margin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) margin = std::min(margin, std::abs(e.lambda(j) + 1.0));
    sc.samples.push_back({r.kappa, margin});
    if (margin > sc.margin + 1e-12) {
      sc.margin = margin;
      sc.kappa = r.kappa;
      bestO = O;
    }
  }
  if (sc.margin < 1e-6) fail(ErrorKind::Numerical, "algorithm 3: no admissible kappa on the scan grid");
  r.kappa = sc.kappa;
  r.branch_margin = sc.margin;
  const Mat U = nearest_unitary(bestO);
  r.H1 = skew_part((I + U).inverse() * (I - U));
  return r;
}

int match_first_order(ModelRecipe& r, const AsymptoticFrame& frame, const std::vector<double>& target,
                      const ModelOptions& opt, double* residual) {
  const Eigen::Index m = frame.dim();
  std::vector<Mat> X;
  for (std::size_t g = 0; g < frame.groups.size(); ++g) X.push_back(hermitian_part(frame.projector(int(g))));
  const int N = opt.forward.nmax;
  const std::vector<int> ns{-N, -N / 2, N / 2, N};
  std::vector<double> c(frame.groups.size(), 0.0);
  const bool preset = r.C0.size() && r.C0.norm() > 0.0;
  for (std::size_t g = 0; g < X.size(); ++g) {
    const double tr = X[g].trace().real();
    if (preset) {
      c[g] = (X[g] * r.C0).trace().real() / tr;
    } else if (r.known) {
      c[g] = -2.0 * target[g];
    } else {
      // Scalar guide: Q1 = i a, Q0 = c gives omega1 = (a^2 - c) / 2.
      c[g] = std::norm((X[g] * r.T).trace() / tr) - 2.0 * target[g];
    }
  }
  int it = 0;
  double res = 0.0;
  const Mat extra = r.coupling.size() ? r.coupling : Mat::Zero(m, m);
  for (; it < opt.c0_iterations; ++it) {
    r.C0 = extra;
    for (std::size_t g = 0; g < X.size(); ++g) r.C0 += c[g] * X[g];
    const PencilSpec s = realize(r, opt.nodes);
    const AsymptoticFrame mf = asymptotic_frame(s, opt.forward.ode);
    const std::vector<LocatedEigenvalue> v = locate_at(s, mf, ns, opt.forward);
    // Model groups follow the model frame; map them onto the target groups by omega.
    std::vector<double> got = first_order_shifts(v, mf, N, N / 2);
    std::vector<double> mapped(frame.groups.size(), 0.0);
    for (std::size_t g = 0; g < frame.groups.size(); ++g) {
      double best = 1e9;
      for (std::size_t k = 0; k < mf.groups.size(); ++k) {
        double d = std::abs(mf.group_omega(int(k)) - frame.group_omega(int(g)));
        d = std::min(d, 1.0 - d);
        if (d < best) {
          best = d;
          mapped[g] = got[k];
        }
      }
    }
    res = 0.0;
    for (std::size_t g = 0; g < c.size(); ++g) {
      const double d = mapped[g] - target[g];
      res = std::max(res, std::abs(d));
      c[g] += 2.0 * d;
    }
    if (res < 1e-9) break;
  }
  r.C0 = extra;
  for (std::size_t g = 0; g < X.size(); ++g) r.C0 += c[g] * X[g];
  r.C0 = hermitian_part(r.C0);
  if (residual) *residual = res;
  return it;
}

namespace {

// Group-summed weights pi n^2 sum alpha / mult at the given n, per target group.
std::vector<Mat> weight_profile(const SpectralData& sd, const AsymptoticFrame& frame, const std::vector<int>& ns) {
  std::vector<Mat> out;
  for (int n : ns)
    for (const auto& grp : frame.groups) {
      Mat a = Mat::Zero(sd.m, sd.m);
      for (int q : grp)
        if (const SpectralEntry* e = sd.find(SpectralIndex::make(n), q)) a += e->alpha / double(e->mult);
      out.push_back(kPi * double(n) * double(n) * a);
    }
  return out;
}

}  // namespace

double match_weights(ModelRecipe& r, const SpectralData& target, const AsymptoticFrame& frame,
                      const std::vector<double>& shifts, const ModelOptions& opt) {
  const Eigen::Index m = frame.dim();
  const std::size_t ng = frame.groups.size();
  // Directions u v^dagger + v u^dagger and i (u v^dagger - v u^dagger) across group ranges.
  std::vector<Mat> ranges;
  for (std::size_t g = 0; g < ng; ++g) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(frame.projector(int(g))));
    std::vector<Eigen::Index> cols;
    for (Eigen::Index k = 0; k < m; ++k)
      if (es.eigenvalues()(k) > 0.5) cols.push_back(k);
    Mat u(m, Eigen::Index(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) u.col(Eigen::Index(k)) = es.eigenvectors().col(cols[k]);
    ranges.push_back(u);
  }
  std::vector<Mat> dirs;
  for (std::size_t g = 0; g < ng; ++g)
    for (std::size_t h = g + 1; h < ng; ++h)
      for (Eigen::Index a = 0; a < ranges[g].cols(); ++a)
        for (Eigen::Index b = 0; b < ranges[h].cols(); ++b) {
          const Mat uv = ranges[g].col(a) * ranges[h].col(b).adjoint();
          dirs.push_back(uv + uv.adjoint());
          dirs.push_back(kI * (uv - uv.adjoint()));
        }
  const std::size_t ncouple = dirs.size();
  // Slope directions: Hermitian within each group range.
  for (const Mat& u : ranges)
    for (Eigen::Index a = 0; a < u.cols(); ++a)
      for (Eigen::Index b = a; b < u.cols(); ++b) {
        const Mat uv = u.col(a) * u.col(b).adjoint();
        if (a == b) {
          dirs.push_back(uv);
          continue;
        }
        dirs.push_back(uv + uv.adjoint());
        dirs.push_back(kI * (uv - uv.adjoint()));
      }
  const int N = opt.forward.nmax;
  const std::vector<int> ns{-N, -N / 2, N / 2, N};
  const std::vector<Mat> want = weight_profile(target, frame, ns);
  // Params: coupling coordinates, then slope coordinates.
  auto unpack = [&](const Eigen::VectorXd& th, ModelRecipe& t) {
    t.coupling = r.coupling.size() ? r.coupling : Mat::Zero(m, m);
    t.slope = r.slope.size() ? r.slope : Mat::Zero(m, m);
    for (std::size_t d = 0; d < dirs.size(); ++d) (d < ncouple ? t.coupling : t.slope) += th(Eigen::Index(d)) * dirs[d];
    // The coupling sits outside the C0 group components, so the shifts stay matched.
    if (t.C0.size()) t.C0 += t.coupling - (r.coupling.size() ? r.coupling : Mat::Zero(m, m));
  };
  auto residual = [&](const Eigen::VectorXd& th) {
    ModelRecipe t = r;
    unpack(th, t);
    const PencilSpec s = realize(t, opt.nodes);
    const AsymptoticFrame mf = asymptotic_frame(s, opt.forward.ode);
    LocateReport rep;
    rep.values = locate_at(s, mf, ns, opt.forward);
    rep.disc_radius = std::numeric_limits<double>::infinity();
    for (const auto& v : rep.values) rep.disc_radius = std::min(rep.disc_radius, v.radius);
    SpectralData sd = weight_matrices(s, rep, opt.forward);
    // Model entries follow the model frame; map each onto the target group by omega.
    std::vector<Mat> got(want.size(), Mat::Zero(m, m));
    for (const auto& e : sd.entries) {
      const auto at = std::find(ns.begin(), ns.end(), e.index.n);
      if (at == ns.end()) continue;
      const double om = mf.group_omega(mf.group_of(e.q));
      std::size_t gbest = 0;
      double best = 1e9;
      for (std::size_t g = 0; g < ng; ++g) {
        double d = std::abs(om - frame.group_omega(int(g)));
        d = std::min(d, 1.0 - d);
        if (d < best) {
          best = d;
          gbest = g;
        }
      }
      const double n = double(*at);
      got[std::size_t(at - ns.begin()) * ng + gbest] += kPi * n * n * e.alpha / double(e.mult);
    }
    // ns = {-N, -N/2, N/2, N}: pi n^2 (alpha - alpha~) = D0 |n| + D1 + O(1/n) per sign,
    // and D1 = 2 v(N/2) - v(N).
    Eigen::VectorXd v(Eigen::Index(ng) * 4 * m * m);
    Eigen::Index k = 0;
    for (const auto& [half, full] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 3}})
      for (std::size_t g = 0; g < ng; ++g)
        for (Eigen::Index c = 0; c < m * m; ++c) {
          const cplx d = 2.0 * (want[half * ng + g](c) - got[half * ng + g](c)) -
                         (want[full * ng + g](c) - got[full * ng + g](c));
          v(k++) = d.real();
          v(k++) = d.imag();
        }
    return v;
  };
  Eigen::VectorXd th = Eigen::VectorXd::Zero(Eigen::Index(dirs.size()));
  Eigen::VectorXd res = residual(th);
  // The response is close to linear: one finite-difference Jacobian serves every step.
  constexpr double step = 1e-3;
  Eigen::MatrixXd J(res.size(), th.size());
  for (Eigen::Index d = 0; d < th.size(); ++d) {
    Eigen::VectorXd tp = th;
    tp(d) += step;
    J.col(d) = (residual(tp) - res) / step;
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
  for (int it = 0; it < opt.weight_iterations; ++it) {
    const Eigen::VectorXd delta = cod.solve(-res);
    const Eigen::VectorXd trial = residual(th + delta);
    if (trial.norm() >= res.norm()) break;
    th += delta;
    res = trial;
    if (delta.norm() < 1e-7) break;
  }
  unpack(th, r);
  match_first_order(r, frame, shifts, opt);
  return res.norm();
}

ModelResult finish_model(ModelRecipe recipe, const AsymptoticFrame& frame, const std::vector<double>& shifts,
                         const ModelOptions& opt) {
  ModelResult out;
  if (opt.match_c0) match_first_order(recipe, frame, shifts, opt, &out.c0_residual);
  out.recipe = std::move(recipe);
  out.spec = realize(out.recipe, opt.nodes);
  require_valid(out.spec, true);
  out.sd = forward_spectral(out.spec, opt.forward);
  out.frame = frame;
  out.shifts = shifts;
  return out;
}

ModelResult estimate_model(const SpectralData& target, const ModelOptions& opt) {
  require_regime(target);
  const Eigen::Index m = target.m;
  // Starting tail: Y'' + (rho^2 - 1/4) Y = 0 with Neumann ends, no pole at zero.
  ModelRecipe start;
  start.h1 = Mat::Zero(m, m);
  start.T = Mat::Zero(m, m);
  start.C0 = -0.25 * eye(m);
  const PencilSpec start_spec = realize(start, opt.nodes);
  const SpectralData start_sd = forward_spectral(start_spec, opt.forward);
  WeylTail start_tail{&start_spec, &start_sd, opt.forward.ode};
  constexpr double kLoose = std::numeric_limits<double>::infinity();
  H1Estimate est = extract_h1(target, &start_tail, kLoose);
  Mat h1 = est.h1;
  double skew = est.skew_defect;
  ModelResult best;
  bool settled = false;
  for (int it = 0; it < std::max(1, opt.h1_iterations); ++it) {
    double defect = 0.0;
    const AsymptoticFrame frame = build_frame_from_sd(target, h1, opt.cluster_tol, &defect);
    const std::vector<double> shifts = first_order_shifts(target, frame);
    best = finish_model(algorithm1(frame, h1), frame, shifts, opt);
    best.h1_iterations = it + 1;
    WeylTail tail{&best.spec, &best.sd, opt.forward.ode};
    est = extract_h1(target, &tail, kLoose);
    const double change = (est.h1 - h1).norm();
    h1 = est.h1;
    skew = est.skew_defect;
    if (change < 1e-9) {
      settled = true;
      break;
    }
  }
  if (!settled) {
    const AsymptoticFrame frame = build_frame_from_sd(target, h1, opt.cluster_tol);
    best = finish_model(algorithm1(frame, h1), frame, first_order_shifts(target, frame), opt);
    best.h1_iterations = opt.h1_iterations + 1;
  } else {
    build_frame_from_sd(target, h1, opt.cluster_tol);
  }
  if (opt.match_weights) {
    ModelRecipe r = best.recipe;
    match_weights(r, target, best.frame, best.shifts, opt);
    const int iterations = best.h1_iterations;
    best = finish_model(r, best.frame, best.shifts, opt);
    best.h1_iterations = iterations;
  }
  best.h1_skew_defect = skew;
  if (skew > 1e-3)
    fail(ErrorKind::Validation, "estimated h1 has a Hermitian part of norm " + std::to_string(skew) +
                                    ": spectral data inconsistent with condition (II)");
  return best;
}

}  // namespace qpencil
