#include "qpencil/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpencil/dop853.hpp"
#include "qpencil/linalg.hpp"
#include "qpencil/parallel.hpp"

namespace qpencil {

namespace {

Mat block(const Mat& row, int i, Eigen::Index m) { return row.middleCols(i * m, m); }

double min_singular(const Mat& a) { return sigma_min(a); }

bool is_close(double a, double b) { return std::abs(a - b) < kernel_switch(a); }

}  // namespace

GroupIndex build_group_index(const SpectralData& sd, const SpectralData& model_sd, int nmax, double omega_tol) {
  require_regime(sd);
  require_regime(model_sd);
  if (sd.m != model_sd.m) fail(ErrorKind::Validation, "model pencil incompatible: dimensions differ");
  if (!model_sd.frame) fail(ErrorKind::Validation, "model spectral data lack the asymptotic frame");
  const Eigen::Index m = sd.m;
  const AsymptoticFrame& frame = *model_sd.frame;

  // Frames agree when the largest shared |n| eigenvalues agree per q.
  int top = 0;
  for (const auto& e : sd.entries)
    if (e.index.abs() <= nmax && model_sd.find(e.index, e.q)) top = std::max(top, e.index.abs());
  for (int n : {-top, top}) {
    for (int q = 0; q < int(m); ++q) {
      const SpectralEntry* a = sd.find(SpectralIndex::make(n), q);
      const SpectralEntry* b = model_sd.find(SpectralIndex::make(n), q);
      if (!a || !b) continue;
      if (std::abs(a->rho.real() - b->rho.real()) > omega_tol)
        fail(ErrorKind::Validation, "model pencil incompatible: omega differs by " +
                                        std::to_string(std::abs(a->rho.real() - b->rho.real())) +
                                        " at (n=" + std::to_string(n) + ", q=" + std::to_string(q + 1) + ")");
    }
  }

  std::vector<SpectralIndex> indices;
  for (const auto* s : {&sd, &model_sd})
    for (const auto& e : s->entries)
      if (e.index.abs() <= nmax) indices.push_back(e.index);
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

  GroupIndex gi;
  gi.m = m;
  gi.nmax = nmax;
  for (const SpectralIndex& idx : indices) {
    for (std::size_t g = 0; g < frame.groups.size(); ++g) {
      Group grp;
      grp.index = idx;
      grp.qs = frame.groups[g];
      for (int q : grp.qs) {
        const SpectralEntry* a = sd.find(idx, q);
        const SpectralEntry* b = model_sd.find(idx, q);
        if (a && b && std::abs(a->rho.real() - b->rho.real()) <= 1e-12 * (1.0 + std::abs(a->rho.real()))) {
          grp.members.push_back(int(gi.points.size()));
          gi.points.push_back({a->rho.real(), Mat(a->alpha / double(a->mult) - b->alpha / double(b->mult)), 0, idx, q});
          continue;
        }
        if (a) {
          grp.members.push_back(int(gi.points.size()));
          gi.points.push_back({a->rho.real(), Mat(a->alpha / double(a->mult)), 1, idx, q});
        }
        if (b) {
          grp.members.push_back(int(gi.points.size()));
          gi.points.push_back({b->rho.real(), Mat(-b->alpha / double(b->mult)), -1, idx, q});
        }
      }
      if (grp.members.empty()) continue;
      const cplx g1 = gi.points[std::size_t(grp.members.front())].rho;
      for (int k : grp.members) grp.diam = std::max(grp.diam, std::abs(gi.points[std::size_t(k)].rho - g1));
      if (!idx.is_zero()) gi.diam_constant = std::max(gi.diam_constant, grp.diam * idx.abs());
      gi.groups.push_back(std::move(grp));
    }
  }
  return gi;
}

SectionFields section_fields(const PencilSpec& model, const GroupIndex& gi, const std::vector<double>& xs,
                             const OdeOptions& ode, int threads) {
  SectionFields f;
  f.xs = xs;
  const std::size_t P = gi.size();
  f.phi.resize(P);
  parallel_for(P, threads, [&](std::size_t i) { f.phi[i] = solve_phi(model, gi.points[i].rho, xs, ode); });
  f.slot.assign(P * P, -1);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < P; ++j)
      if (is_close(gi.points[i].rho.real(), gi.points[j].rho.real())) {
        f.slot[i * P + j] = int(f.close.size());
        f.close.push_back({int(i), int(j)});
      }
  f.close_D.resize(f.close.size());
  parallel_for(f.close.size(), threads, [&](std::size_t c) {
    const auto [i, j] = f.close[c];
    f.close_D[c] = kernel_D_integral(model, xs, gi.points[std::size_t(i)].rho, gi.points[std::size_t(j)].rho, ode);
  });
  f.Q1.resize(xs.size());
  f.dQ1.resize(xs.size());
  f.Q0.resize(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    model.Q1.eval(xs[k], f.Q1[k], f.dQ1[k]);
    model.Q0.eval(xs[k], f.Q0[k]);
  }
  return f;
}

SectionOperator assemble_R(const SectionFields& f, const GroupIndex& gi, std::size_t node, bool derivatives) {
  const Eigen::Index m = gi.m;
  const int P = int(gi.size());
  const Eigen::Index n = P * m;
  const Mat Q1i = 2.0 * kI * f.Q1[node];
  const Mat dQ1i = 2.0 * kI * f.dQ1[node];
  Mat U(m, n), Up(m, n), A(n, m), Ap(n, m);
  for (int i = 0; i < P; ++i) {
    const Mat& phi = f.phi[std::size_t(i)].value[node];
    const Mat& dphi = f.phi[std::size_t(i)].deriv[node];
    U.middleCols(i * m, m) = phi;
    Up.middleCols(i * m, m) = dphi;
    const Mat& al = gi.points[std::size_t(i)].alpha;
    A.middleRows(i * m, m) = al * phi.adjoint();
    Ap.middleRows(i * m, m) = al * dphi.adjoint();
  }
  SectionOperator op;
  const Mat ApU = Ap * U, AUp = A * Up;
  op.IR = Mat::Identity(n, n);
  for (int j = 0; j < P; ++j) {
    const double s = gi.points[std::size_t(j)].rho.real();
    for (int i = 0; i < P; ++i) {
      const double g = gi.points[std::size_t(i)].rho.real();
      const int c = f.slot[std::size_t(i) * std::size_t(P) + std::size_t(j)];
      if (c >= 0)
        op.IR.block(j * m, i * m, m, m) += gi.points[std::size_t(j)].alpha * f.close_D[std::size_t(c)][node];
      else
        op.IR.block(j * m, i * m, m, m) +=
            (ApU.block(j * m, i * m, m, m) - AUp.block(j * m, i * m, m, m)) / (g - s);
    }
  }
  op.psi = U;
  op.dpsi = Up;
  if (!derivatives) return op;
  const Mat V = Q1i * U, Vp = Q1i * Up, W = dQ1i * U;
  const Mat AU = A * U, AV = A * V, ApV = Ap * V, AVp = A * Vp, AW = A * W;
  op.dR.resize(n, n);
  op.ddR.resize(n, n);
  for (int j = 0; j < P; ++j) {
    const double s = gi.points[std::size_t(j)].rho.real();
    for (int i = 0; i < P; ++i) {
      const double sum = gi.points[std::size_t(i)].rho.real() + s;
      op.dR.block(j * m, i * m, m, m) = sum * AU.block(j * m, i * m, m, m) + AV.block(j * m, i * m, m, m);
      op.ddR.block(j * m, i * m, m, m) =
          sum * (ApU.block(j * m, i * m, m, m) + AUp.block(j * m, i * m, m, m)) + ApV.block(j * m, i * m, m, m) +
          AW.block(j * m, i * m, m, m) + AVp.block(j * m, i * m, m, m);
    }
  }
  op.ddpsi.resize(m, n);
  for (int i = 0; i < P; ++i) {
    const double g = gi.points[std::size_t(i)].rho.real();
    op.ddpsi.middleCols(i * m, m) =
        -(g * g * U.middleCols(i * m, m) + g * V.middleCols(i * m, m) + f.Q0[node] * U.middleCols(i * m, m));
  }
  return op;
}

MainSolution solve_main_equation(const SectionOperator& op, bool derivatives) {
  MainSolution s;
  if (op.IR.rows() == 0) {
    s.z = op.psi;
    s.dz = op.dpsi;
    s.ddz = op.ddpsi;
    s.cond = 1.0;
    return s;
  }
  // z (I + R) = psi as (I + R)^T z^T = psi^T.
  Eigen::PartialPivLU<Mat> lu(op.IR.transpose());
  auto right_solve = [&](const Mat& rhs) { return Mat(lu.solve(rhs.transpose()).transpose()); };
  s.z = right_solve(op.psi);
  const double rc = lu.rcond();
  s.cond = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  const double scale = std::max(op.psi.norm(), 1e-300);
  s.residual = (s.z * op.IR - op.psi).norm() / scale;
  if (derivatives) {
    s.dz = right_solve(op.dpsi - s.z * op.dR);
    s.ddz = right_solve(op.ddpsi - 2.0 * s.dz * op.dR - s.z * op.ddR);
  }
  return s;
}

EvalFields eval_fields(const PencilSpec& model, cplx rho, const std::vector<double>& xs, const OdeOptions& ode) {
  EvalFields e;
  e.rho = rho;
  PhiS ps = solve_phi_S(model, rho, xs, ode);
  const Mat M = weyl_matrix(model, rho, ode).M;
  e.phi = ps.phi;
  e.Phi = ps.S;
  e.Phi.kind = FieldKind::Other;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    e.Phi.value[k] += ps.phi.value[k] * M;
    e.Phi.deriv[k] += ps.phi.deriv[k] * M;
  }
  return e;
}

EvalJet reconstruct_z_w(const SectionFields& f, const GroupIndex& gi, std::size_t node, const MainSolution& sol,
                        const EvalFields& e) {
  const Eigen::Index m = gi.m;
  const cplx rho = e.rho;
  const Mat Q1i = 2.0 * kI * f.Q1[node];
  const Mat dQ1i = 2.0 * kI * f.dQ1[node];
  auto second = [&](const Mat& y) {
    Mat c = Q1i * y * rho + f.Q0[node] * y;
    return Mat(-(rho * rho * y + c));
  };
  const Mat& p = e.phi.value[node];
  const Mat& dp = e.phi.deriv[node];
  const Mat& F = e.Phi.value[node];
  const Mat& dF = e.Phi.deriv[node];
  EvalJet j;
  j.rho = rho;
  j.z = p;
  j.dz = dp;
  j.ddz = second(p);
  j.w = F;
  j.dw = dF;
  j.ddw = second(F);
  const Mat Vp = Q1i * p, Vdp = Q1i * dp, Wp = dQ1i * p;
  const Mat VF = Q1i * F, VdF = Q1i * dF, WF = dQ1i * F;
  for (int k = 0; k < int(gi.size()); ++k) {
    const GroupPoint& pt = gi.points[std::size_t(k)];
    const cplx s = pt.rho;
    const Mat& ps = f.phi[std::size_t(k)].value[node];
    const Mat& dps = f.phi[std::size_t(k)].deriv[node];
    const Mat A = pt.alpha * ps.adjoint();
    const Mat Ap = pt.alpha * dps.adjoint();
    const cplx sum = rho + s;
    const cplx inv = 1.0 / (rho - s);
    // alpha D~(x, rho, s) and its x-derivatives, then the same with Phi~ for E~.
    const Mat D = (Ap * p - A * dp) * inv;
    const Mat Dx = sum * (A * p) + A * Vp;
    const Mat Dxx = Ap * (sum * p + Vp) + A * Wp + A * (sum * dp + Vdp);
    const Mat E = (Ap * F - A * dF) * inv;
    const Mat Ex = sum * (A * F) + A * VF;
    const Mat Exx = Ap * (sum * F + VF) + A * WF + A * (sum * dF + VdF);
    const Mat zk = block(sol.z, k, m), dzk = block(sol.dz, k, m), ddzk = block(sol.ddz, k, m);
    j.z -= zk * D;
    j.dz -= dzk * D + zk * Dx;
    j.ddz -= ddzk * D + 2.0 * dzk * Dx + zk * Dxx;
    j.w -= zk * E;
    j.dw -= dzk * E + zk * Ex;
    j.ddw -= ddzk * E + 2.0 * dzk * Ex + zk * Exx;
  }
  return j;
}

OmegaJet omega_jet(const EvalJet& j) {
  OmegaJet o;
  const Mat G = j.z * j.dw.adjoint() - j.w * j.dz.adjoint();
  const Mat dG = j.dz * j.dw.adjoint() + j.z * j.ddw.adjoint() - j.dw * j.dz.adjoint() - j.w * j.ddz.adjoint();
  o.H = hermitian_part(G.inverse());
  o.dH = hermitian_part(-o.H * dG * o.H);
  const Mat Y0 = o.H * j.dz * j.z.inverse();
  const Mat X = Y0 - Y0.adjoint();
  o.a = o.H.inverse() * (o.dH - X) * 0.5;
  o.zw_defect = (j.z * j.w.adjoint() - j.w * j.z.adjoint()).norm();
  return o;
}

std::vector<Mat> integrate_omega(const std::vector<double>& xs, const std::vector<Mat>& a, std::size_t first,
                                 std::size_t last) {
  const Eigen::Index m = a[first].rows();
  std::vector<Mat> out(xs.size());
  out[first] = eye(m);
  if (last <= first) return out;
  const std::size_t count = last - first + 1;
  if (count < std::size_t(GridFunction::kStencil)) {
    // Too few nodes for the interpolant: exponential midpoint steps.
    for (std::size_t k = first; k < last; ++k)
      out[k + 1] = expm(0.5 * (xs[k + 1] - xs[k]) * (a[k] + a[k + 1])) * out[k];
    return out;
  }
  std::vector<Mat> vals(a.begin() + std::ptrdiff_t(first), a.begin() + std::ptrdiff_t(last) + 1);
  const GridFunction af(xs[first], xs[last], std::move(vals));
  Mat av;
  auto rhs = [&](double x, const Mat& y, Mat& dy) {
    af.eval(x, av);
    dy.noalias() = av * y;
  };
  std::vector<double> report(xs.begin() + std::ptrdiff_t(first), xs.begin() + std::ptrdiff_t(last) + 1);
  Dop853Options o;
  o.rtol = 1e-12;
  o.atol = 1e-14;
  Dop853<Mat> solver(o);
  solver.set_stops(report);
  Mat y = eye(m);
  solver.integrate(rhs, xs[first], xs[last], y, report,
                   [&](std::size_t k, double, const Mat& v) { out[first + k] = v; });
  return out;
}

NodeCoefficients extract_node(const Mat& Omega, const Mat& a, const Mat& da, const EvalJet& ja,
                              const EvalJet& jb) {
  const Eigen::Index m = Omega.rows();
  auto S = [&](const EvalJet& j) {
    Mat s = (j.ddz + 2.0 * a * j.dz) * j.z.inverse();
    s.diagonal().array() += j.rho * j.rho;
    return s;
  };
  const Mat Oi = Omega.inverse();
  const Mat Sa = S(ja), Sb = S(jb);
  NodeCoefficients c;
  c.Q1 = -Omega * (Sa - Sb) * Oi / (2.0 * kI * (ja.rho - jb.rho));
  c.Q0 = -Omega * (Sa + da + a * a) * Oi - 2.0 * kI * ja.rho * c.Q1;
  c.conditioning = std::min(min_singular(ja.z), min_singular(jb.z));
  (void)m;
  return c;
}

std::pair<Mat, Mat> extract_left(const Mat& a0, const EvalJet& ja, const EvalJet& jb) {
  // U(phi) = 0 with phi(0) = I: i rho h1 + h0 = -(a(0) + z'(0, rho)).
  const Mat ra = -(a0 + ja.dz), rb = -(a0 + jb.dz);
  const Mat h1 = (ra - rb) / (kI * (ja.rho - jb.rho));
  const Mat h0 = ra - kI * ja.rho * h1;
  return {h1, h0};
}

std::pair<Mat, Mat> extract_right(const Mat& Omega, const Mat& a, const EvalJet& ja, const EvalJet& jb) {
  // V(Phi) = 0 with Phi = Omega w: i rho H1 + H0 = -Omega (a w + w') w^{-1} Omega^{-1}.
  const Mat Oi = Omega.inverse();
  auto r = [&](const EvalJet& j) { return Mat(-Omega * (a * j.w + j.dw) * j.w.inverse() * Oi); };
  const Mat ra = r(ja), rb = r(jb);
  const Mat H1 = (ra - rb) / (kI * (ja.rho - jb.rho));
  const Mat H0 = ra - kI * ja.rho * H1;
  return {H1, H0};
}

void extrapolate_edges(const std::vector<double>& xs, std::vector<Mat>& values, double width) {
  const double lo = xs.front(), hi = xs.back();
  for (const double side : {1.0, -1.0}) {
    auto dist = [&](double x) { return side > 0 ? x - lo : hi - x; };
    std::vector<std::size_t> fit, fill;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double d = dist(xs[k]);
      if (d < width)
        fill.push_back(k);
      else if (d <= 3.0 * width)
        fit.push_back(k);
    }
    if (fill.empty() || fit.size() < 4) continue;
    Eigen::MatrixXd V(Eigen::Index(fit.size()), 3);
    for (std::size_t r = 0; r < fit.size(); ++r) {
      const double t = dist(xs[fit[r]]) / width;
      V.row(Eigen::Index(r)) << 1.0, t, t * t;
    }
    const Eigen::MatrixXd pinv = (V.transpose() * V).ldlt().solve(V.transpose());
    std::vector<Mat> c(3, Mat::Zero(values[fit[0]].rows(), values[fit[0]].cols()));
    for (int d = 0; d < 3; ++d)
      for (std::size_t r = 0; r < fit.size(); ++r) c[std::size_t(d)] += pinv(d, Eigen::Index(r)) * values[fit[r]];
    for (std::size_t k : fill) {
      const double t = dist(xs[k]) / width;
      values[k] = c[0] + t * c[1] + t * t * c[2];
    }
  }
}

namespace {

// Moves each evaluation point at least `gap` away from every pole of both data sets.
std::vector<double> admissible_points(std::vector<double> rhos, const GroupIndex& gi, double gap) {
  for (double& r : rhos) {
    for (int guard = 0; guard < 100; ++guard) {
      bool ok = true;
      for (const auto& p : gi.points)
        if (std::abs(p.rho.real() - r) < gap) ok = false;
      if (ok) break;
      r += 0.5 * gap;
    }
  }
  return rhos;
}

// Pair of evaluation jets with the best-conditioned z.
std::pair<int, int> best_pair(const std::vector<EvalJet>& jets, bool use_w) {
  std::pair<int, int> best{0, 1};
  double score = -1.0;
  for (int a = 0; a < int(jets.size()); ++a)
    for (int b = a + 1; b < int(jets.size()); ++b) {
      const Mat& za = use_w ? jets[std::size_t(a)].w : jets[std::size_t(a)].z;
      const Mat& zb = use_w ? jets[std::size_t(b)].w : jets[std::size_t(b)].z;
      const double s = std::min(sigma_min(za), sigma_min(zb)) * std::abs(jets[std::size_t(a)].rho - jets[std::size_t(b)].rho);
      if (s > score) {
        score = s;
        best = {a, b};
      }
    }
  return best;
}

int best_single(const std::vector<EvalJet>& jets) {
  int best = 0;
  double score = -1.0;
  for (int a = 0; a < int(jets.size()); ++a) {
    const double s = sigma_min(jets[std::size_t(a)].z);
    if (s > score) {
      score = s;
      best = a;
    }
  }
  return best;
}

struct Model {
  PencilSpec spec;
  SpectralData sd;
  std::string kind;
  double kappa = 0.0;
};

}  // namespace

InverseResult algorithm4(const SpectralData& sd, const InverseOptions& opt) {
  require_regime(sd);
  const Eigen::Index m = sd.m;
  const int G = opt.nodes;
  const std::size_t nG = static_cast<std::size_t>(G);
  const std::vector<double> xs = uniform_grid(G);
  const OdeOptions& ode = opt.model.forward.ode;
  ModelOptions mo = opt.model;
  mo.nodes = G;
  mo.forward.nmax = opt.nmax;

  Model model;
  std::optional<ModelResult> est;
  double skew = 0.0;
  if (opt.first_model) {
    model.spec = *opt.first_model;
    if (model.spec.nodes() != G) fail(ErrorKind::Validation, "first model grid differs from the inverse grid");
    model.sd = opt.first_model_sd ? *opt.first_model_sd : forward_spectral(model.spec, mo.forward);
    model.kind = "given";
  } else {
    est = estimate_model(sd, mo);
    model.spec = est->spec;
    model.sd = est->sd;
    model.kind = "algorithm 1";
    skew = est->h1_skew_defect;
  }

  InverseResult out;
  RunLog& log = out.log;
  log.xs = xs;
  log.Omega.assign(nG, Mat());
  std::vector<Mat> Q1(nG, Mat::Zero(m, m)), Q0(nG, Mat::Zero(m, m));
  std::vector<int> breaks;
  Mat h1, h0, H1, H0;
  std::size_t start = 0;
  double safety = opt.safety;
  bool halved = false;

  for (int k = 1; k <= opt.max_steps; ++k) {
    const GroupIndex gi = build_group_index(sd, model.sd, opt.nmax);
    const SectionFields f = section_fields(model.spec, gi, xs, ode, opt.threads);
    const std::vector<double> rhos = admissible_points(opt.rho_eval, gi, opt.pole_gap);
    std::vector<EvalFields> ef;
    for (double r : rhos) ef.push_back(eval_fields(model.spec, r, xs, ode));

    StepLog st;
    st.k = k;
    st.delta_start = xs[start];
    st.model = model.kind;
    st.kappa = model.kappa;
    st.points = gi.size();
    st.diam_constant = gi.diam_constant;
    st.h1_skew_defect = skew;

    std::vector<Mat> a(nG);
    std::vector<std::vector<EvalJet>> jets(nG);
    std::size_t flag = nG;
    std::vector<NodeLog> nl(nG);
    std::vector<char> bad(nG, 0);
    parallel_for(nG - start, opt.threads, [&](std::size_t t) {
      const std::size_t i = start + t;
      const SectionOperator op = assemble_R(f, gi, i, true);
      const MainSolution sol = solve_main_equation(op, true);
      NodeLog& L = nl[i];
      L.x = xs[i];
      L.step = k;
      L.cond = sol.cond;
      L.residual = sol.residual;
      if (!(sol.cond <= opt.cond_limit)) {
        bad[i] = 1;
        return;
      }
      for (const auto& e : ef) jets[i].push_back(reconstruct_z_w(f, gi, i, sol, e));
      const OmegaJet oj = omega_jet(jets[i][std::size_t(best_single(jets[i]))]);
      Eigen::SelfAdjointEigenSolver<Mat> es(oj.H);
      const double lmin = es.eigenvalues().minCoeff();
      L.omega_sigma = lmin > 0.0 ? std::sqrt(lmin) : 0.0;
      L.zw_defect = oj.zw_defect;
      a[i] = oj.a;
      if (!(L.omega_sigma >= opt.omega_floor) || !oj.a.allFinite()) bad[i] = 1;
    });
    for (std::size_t i = start; i < nG; ++i)
      if (bad[i]) {
        flag = i;
        break;
      }

    std::size_t end = nG - 1;
    if (flag < nG) {
      const double span = double(flag - start);
      std::size_t adv = std::size_t(std::floor(safety * span));
      if (adv < 1 && !halved) {
        halved = true;
        safety *= 0.5;
        adv = std::size_t(std::floor(safety * span));
      }
      if (adv < 1)
        fail(ErrorKind::Numerical, "algorithm 4 made no progress at x = " + std::to_string(xs[start]) +
                                       " (main equation near-singular or Omega degenerate at x = " +
                                       std::to_string(xs[flag]) + ")");
      end = start + adv;
    }
    for (std::size_t i = start; i <= end; ++i) {
      log.nodes.push_back(nl[i]);
      st.max_cond = std::max(st.max_cond, nl[i].cond);
      st.max_residual = std::max(st.max_residual, nl[i].residual);
    }

    const std::vector<Mat> Om = integrate_omega(xs, a, start, end);
    std::vector<Mat> da(nG, Mat::Zero(m, m));
    if (end - start + 1 >= std::size_t(GridFunction::kStencil)) {
      std::vector<Mat> vals(a.begin() + std::ptrdiff_t(start), a.begin() + std::ptrdiff_t(end) + 1);
      const GridFunction af(xs[start], xs[end], std::move(vals));
      for (std::size_t i = start; i <= end; ++i) da[i] = af.derivative(xs[i]);
    } else {
      for (std::size_t i = start; i <= end; ++i) {
        const std::size_t lo = i > start ? i - 1 : i, hi = i < end ? i + 1 : i;
        if (hi > lo) da[i] = (a[hi] - a[lo]) / (xs[hi] - xs[lo]);
      }
    }
    for (std::size_t i = (start == 0 ? 0 : start + 1); i <= end; ++i) {
      const auto [pa, pb] = best_pair(jets[i], false);
      NodeCoefficients c = extract_node(Om[i], a[i], da[i], jets[i][std::size_t(pa)], jets[i][std::size_t(pb)]);
      Q1[i] = c.Q1;
      Q0[i] = c.Q0;
      log.Omega[i] = Om[i];
    }
    const bool richardson = opt.boundary_richardson && opt.nmax >= 8;
    // Jets at one node from the section truncated at nmax / 2.
    auto half_jets = [&](std::size_t node) {
      const GroupIndex hg = build_group_index(sd, model.sd, opt.nmax / 2);
      const std::vector<double> at{xs[node]};
      const SectionFields hf = section_fields(model.spec, hg, at, ode, opt.threads);
      const MainSolution sol = solve_main_equation(assemble_R(hf, hg, 0, true), true);
      std::vector<EvalJet> out;
      for (double r : rhos) out.push_back(reconstruct_z_w(hf, hg, 0, sol, eval_fields(model.spec, r, at, ode)));
      return out;
    };
    if (start == 0) {
      const auto [pa, pb] = best_pair(jets[0], false);
      std::tie(h1, h0) = extract_left(a[0], jets[0][std::size_t(pa)], jets[0][std::size_t(pb)]);
      if (richardson) {
        const std::vector<EvalJet> hj = half_jets(0);
        const Mat ha = omega_jet(hj[std::size_t(best_single(hj))]).a;
        const auto [g1, g0] = extract_left(ha, hj[std::size_t(pa)], hj[std::size_t(pb)]);
        h1 = 2.0 * h1 - g1;
        h0 = 2.0 * h0 - g0;
      }
    }
    st.delta_end = xs[end];
    log.steps.push_back(st);
    if (end == nG - 1) {
      const auto [pa, pb] = best_pair(jets[end], true);
      std::tie(H1, H0) = extract_right(Om[end], a[end], jets[end][std::size_t(pa)], jets[end][std::size_t(pb)]);
      if (richardson) {
        const std::vector<EvalJet> hj = half_jets(end);
        const Mat ha = omega_jet(hj[std::size_t(best_single(hj))]).a;
        const auto [g1, g0] = extract_right(Om[end], ha, hj[std::size_t(pa)], hj[std::size_t(pb)]);
        H1 = 2.0 * H1 - g1;
        H0 = 2.0 * H0 - g0;
      }
      break;
    }
    if (k == opt.max_steps) fail(ErrorKind::Numerical, "algorithm 4 did not reach pi within the step limit");

    // Next model: Algorithm 3 with Q1 known on [0, delta_k].
    breaks.push_back(int(end));
    if (!est) {
      est.emplace();
      est->recipe.h1 = model.spec.h1;
      est->frame = build_frame_from_sd(sd, model.spec.h1, mo.cluster_tol);
      est->shifts = first_order_shifts(sd, est->frame);
    }
    std::vector<Mat> known(Q1);
    for (std::size_t i = end + 1; i < known.size(); ++i) known[i] = Q1[end];
    for (auto& q : known) q = skew_part(q);
    const GridFunction kf(0.0, kPi, known);
    ModelRecipe r = algorithm3(est->frame, est->recipe.h1, kf, int(end), ode);
    r.C0 = est->recipe.C0;
    r.coupling = est->recipe.coupling;
    r.slope = est->recipe.slope;
    ModelResult next = finish_model(r, est->frame, est->shifts, mo);
    model.spec = next.spec;
    model.sd = next.sd;
    model.kind = "algorithm 3";
    model.kappa = next.recipe.kappa;
    start = end;
  }

  if (opt.edge_layer > 0.0) {
    const double width = opt.edge_layer / double(opt.nmax);
    extrapolate_edges(xs, Q1, width);
    extrapolate_edges(xs, Q0, width);
  }
  PencilSpec& s = out.spec;
  s.m = m;
  s.Q1 = GridFunction(0.0, kPi, Q1, breaks);
  s.Q0 = GridFunction(0.0, kPi, Q0, breaks);
  s.h1 = h1;
  s.h0 = h0;
  s.H1 = H1;
  s.H0 = H0;
  log.selfadjoint_defect = enforce_selfadjoint(s);
  return out;
}

OmegaLambda exact_omega(const PencilSpec& spec, const PencilSpec& model, const std::vector<double>& xs,
                        const OdeOptions& ode) {
  const SolutionField pp = solve_P(spec, 1, xs, ode), pm = solve_P(spec, -1, xs, ode);
  const SolutionField tp = solve_P(model, 1, xs, ode), tm = solve_P(model, -1, xs, ode);
  OmegaLambda o;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Mat minus = pm.value[k] * tm.value[k].adjoint();
    const Mat plus = pp.value[k] * tp.value[k].adjoint();
    o.Omega.push_back(0.5 * (minus + plus));
    o.Lambda.push_back((minus - plus) / (2.0 * kI));
  }
  return o;
}

double verify_identity_fromcont4(double x, const GroupIndex& gi, const PencilSpec& spec, const PencilSpec& model,
                                 const OdeOptions& ode, const GroupIndex* inner) {
  const Eigen::Index m = gi.m;
  const GroupIndex& in = inner ? *inner : gi;
  const std::vector<double> at{x};
  // Solutions of both pencils and their adjoints at x for one point list.
  struct Fields {
    std::vector<SolutionField> y, ya, t, ta;
  };
  auto fields = [&](const GroupIndex& g) {
    Fields f;
    for (const auto& pt : g.points) {
      f.y.push_back(solve_phi(spec, pt.rho, at, ode));
      f.ya.push_back(solve_phi_adjoint(spec, pt.rho, at, ode));
      f.t.push_back(solve_phi(model, pt.rho, at, ode));
      f.ta.push_back(solve_phi_adjoint(model, pt.rho, at, ode));
    }
    return f;
  };
  const Fields fa = fields(gi);
  const Fields fb = inner ? fields(in) : fa;
  // D(x, g, s) from phi(g) and the adjoint row at s.
  auto kernel = [&](const PencilSpec& s, const SolutionField& ph, const SolutionField& adj, cplx g, cplx sj) {
    if (is_close(g.real(), sj.real())) return Mat(kernel_D_integral(s, at, g, sj, ode)[0]);
    return Mat((adj.deriv[0] * ph.value[0] - adj.value[0] * ph.deriv[0]) / (g - sj));
  };
  const Mat Lt = exact_omega(model, spec, at, ode).Lambda[0];
  const int P = int(gi.size()), Pb = int(in.size());
  const Eigen::Index n = P * m, nb = Pb * m;
  Mat R(n, n), Rt(n, n), Th(n, n), Rt_in(n, nb), R_in(nb, n);
  for (int j = 0; j < P; ++j) {
    const GroupPoint& pj = gi.points[std::size_t(j)];
    for (int i = 0; i < P; ++i) {
      const GroupPoint& pi = gi.points[std::size_t(i)];
      R.block(j * m, i * m, m, m) = pj.alpha * kernel(spec, fa.y[std::size_t(i)], fa.ya[std::size_t(j)], pi.rho, pj.rho);
      Rt.block(j * m, i * m, m, m) = pj.alpha * kernel(model, fa.t[std::size_t(i)], fa.ta[std::size_t(j)], pi.rho, pj.rho);
      Th.block(j * m, i * m, m, m) = pj.alpha * fa.ta[std::size_t(j)].value[0] * Lt * fa.y[std::size_t(i)].value[0];
    }
    for (int l = 0; l < Pb; ++l) {
      const GroupPoint& pl = in.points[std::size_t(l)];
      Rt_in.block(j * m, l * m, m, m) = pj.alpha * kernel(model, fb.t[std::size_t(l)], fa.ta[std::size_t(j)], pl.rho, pj.rho);
      for (int i = 0; i < P; ++i)
        R_in.block(l * m, i * m, m, m) =
            pl.alpha * kernel(spec, fa.y[std::size_t(i)], fb.ya[std::size_t(l)], gi.points[std::size_t(i)].rho, pl.rho);
    }
  }
  // Right-module composition: psi (R~ R) = (psi R~) R. With an inner section the partial
  // sums over |n| <= K/4, K/2, K are Romberg-extrapolated in 1/K.
  Mat comp;
  if (!inner) {
    comp = Rt_in * R_in;
  } else {
    const int K = in.nmax;
    std::vector<Mat> part;
    for (const int cut : {K / 4, K / 2, K}) {
      Mat sum = Mat::Zero(n, n);
      for (int l = 0; l < Pb; ++l)
        if (in.points[std::size_t(l)].index.abs() <= cut)
          sum += Rt_in.middleCols(l * m, m) * R_in.middleRows(l * m, m);
      part.push_back(sum);
    }
    comp = (8.0 * part[2] - 6.0 * part[1] + part[0]) / 3.0;
  }
  const Mat L = R - Rt + Th + comp;
  double worst = 0.0;
  for (int i = 0; i < P; ++i) {
    double col = 0.0;
    for (int j = 0; j < P; ++j) col += L.block(j * m, i * m, m, m).norm();
    worst = std::max(worst, col);
  }
  return worst;
}

}  // namespace qpencil
