#include "qpencil/ode.hpp"

#include <algorithm>
#include <cmath>

#include "qpencil/dop853.hpp"
#include "qpencil/linalg.hpp"

namespace qpencil {

namespace {

constexpr double kOverflowExponent = 700.0;

void check_growth(cplx rho) {
  if (std::abs(rho.imag()) * kPi > kOverflowExponent)
    fail(ErrorKind::Numerical, "|Im rho| pi exceeds the overflow bound " +
                                   std::to_string(kOverflowExponent));
}

Dop853Options integrator_options(const OdeOptions& o) {
  Dop853Options d;
  d.rtol = o.tol;
  d.atol = o.tol * 1e-2;
  return d;
}

// Stacked blocks [Y_0; Y_0'; Y_1; Y_1'; ...], Y_k the k-th rho-derivative.
struct LinearRhs {
  const PencilSpec& s;
  cplx rho;
  int order;
  bool transpose;
  bool reversed;
  Mat C, Q1v, Cr;

  void operator()(double x, const Mat& y, Mat& dy) {
    const Eigen::Index m = s.m;
    const double xe = reversed ? kPi - x : x;
    s.coefficient(xe, rho, C, Q1v);
    if (transpose) {
      C.transposeInPlace();
      Q1v.transposeInPlace();
    }
    if (order > 0) {
      Cr.noalias() = (2.0 * kI) * Q1v;
      Cr.diagonal().array() += 2.0 * rho;
    }
    for (int b = 0; b <= order; ++b) {
      const Eigen::Index r = 2 * m * b;
      dy.middleRows(r, m) = y.middleRows(r + m, m);
      dy.middleRows(r + m, m).noalias() = -C * y.middleRows(r, m);
      if (b >= 1) dy.middleRows(r + m, m).noalias() -= double(b) * (Cr * y.middleRows(r - 2 * m, m));
      if (b >= 2) dy.middleRows(r + m, m) -= double(b * (b - 1)) * y.middleRows(r - 4 * m, m);
    }
  }
};

// Runs the integrator over [0, pi] split at breakpoints; positions are in the
// integration variable. sink(global_index, y).
template <class Rhs, class Sink>
void run_segments(Rhs& rhs, Mat& y, const std::vector<double>& breaks, std::vector<double> stops,
                  const std::vector<double>& report, const OdeOptions& opt, Sink&& sink) {
  std::vector<double> cuts{0.0};
  for (double b : breaks)
    if (b > 1e-14 && b < kPi - 1e-14) cuts.push_back(b);
  cuts.push_back(kPi);
  std::sort(cuts.begin(), cuts.end());
  Dop853<Mat> solver(integrator_options(opt));
  std::sort(stops.begin(), stops.end());
  solver.set_stops(std::move(stops));
  std::size_t next = 0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    std::vector<double> local;
    std::vector<std::size_t> idx;
    while (next < report.size() && (report[next] <= cuts[c + 1] || c + 2 == cuts.size())) {
      local.push_back(report[next]);
      idx.push_back(next);
      ++next;
    }
    solver.integrate(rhs, cuts[c], cuts[c + 1], y, local,
                     [&](std::size_t k, double, const Mat& v) { sink(idx[k], v); });
  }
}

std::vector<double> reflected(std::vector<double> v) {
  for (double& x : v) x = kPi - x;
  std::reverse(v.begin(), v.end());
  return v;
}

std::vector<double> cell_edges(const PencilSpec& s) { return s.Q1.node_positions(); }

void check_points(const std::vector<double>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < -1e-14 || xs[i] > kPi + 1e-14)
      fail(ErrorKind::Validation, "report point outside [0, pi]");
    if (i > 0 && xs[i] < xs[i - 1]) fail(ErrorKind::Validation, "report points must be sorted");
  }
}

Mat initial_phi_S(const PencilSpec& s, cplx rho, bool with_S, int order, bool transpose) {
  const Eigen::Index m = s.m;
  const Eigen::Index cols = with_S ? 2 * m : m;
  Mat y = Mat::Zero(2 * m * (order + 1), cols);
  Mat d0 = -(kI * rho * s.h1 + s.h0);
  Mat d1 = -kI * s.h1;
  if (transpose) {
    d0.transposeInPlace();
    d1.transposeInPlace();
  }
  y.block(0, 0, m, m).setIdentity();
  y.block(m, 0, m, m) = d0;
  if (order >= 1) y.block(3 * m, 0, m, m) = d1;
  if (with_S) y.block(m, m, m, m).setIdentity();
  return y;
}

SolutionField make_field(FieldKind kind, cplx rho, const std::vector<double>& xs) {
  SolutionField f;
  f.kind = kind;
  f.rho = rho;
  f.x = xs;
  f.value.resize(xs.size());
  f.deriv.resize(xs.size());
  return f;
}

}  // namespace

std::vector<double> uniform_grid(int nodes) {
  std::vector<double> x(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) x[std::size_t(i)] = i == nodes - 1 ? kPi : kPi * i / (nodes - 1);
  return x;
}

PhiS solve_phi_S(const PencilSpec& s, cplx rho, const std::vector<double>& xs, const OdeOptions& opt) {
  check_growth(rho);
  check_points(xs);
  const Eigen::Index m = s.m;
  LinearRhs rhs{s, rho, 0, false, false, {}, {}, {}};
  Mat y = initial_phi_S(s, rho, true, 0, false);
  PhiS out{make_field(FieldKind::Phi, rho, xs), make_field(FieldKind::S, rho, xs)};
  run_segments(rhs, y, s.breakpoints(), cell_edges(s), xs, opt, [&](std::size_t k, const Mat& v) {
    out.phi.value[k] = v.block(0, 0, m, m);
    out.phi.deriv[k] = v.block(m, 0, m, m);
    out.S.value[k] = v.block(0, m, m, m);
    out.S.deriv[k] = v.block(m, m, m, m);
  });
  return out;
}

SolutionField solve_phi(const PencilSpec& s, cplx rho, const std::vector<double>& xs, const OdeOptions& opt) {
  return param_derivative(s, rho, 0, xs, opt);
}

SolutionField solve_psi(const PencilSpec& s, cplx rho, const std::vector<double>& xs, const OdeOptions& opt) {
  check_growth(rho);
  check_points(xs);
  const Eigen::Index m = s.m;
  LinearRhs rhs{s, rho, 0, false, true, {}, {}, {}};
  Mat y = Mat::Zero(2 * m, m);
  y.topRows(m).setIdentity();
  y.bottomRows(m) = kI * rho * s.H1 + s.H0;
  std::vector<double> ts(xs.rbegin(), xs.rend());
  for (double& t : ts) t = std::max(0.0, kPi - t);
  SolutionField f = make_field(FieldKind::Psi, rho, xs);
  const std::size_t n = xs.size();
  run_segments(rhs, y, reflected(s.breakpoints()), reflected(cell_edges(s)), ts, opt, [&](std::size_t k, const Mat& v) {
    f.value[n - 1 - k] = v.topRows(m);
    f.deriv[n - 1 - k] = -v.bottomRows(m);
  });
  return f;
}

SolutionField solve_phi_adjoint(const PencilSpec& s, cplx theta, const std::vector<double>& xs,
                                const OdeOptions& opt) {
  check_growth(theta);
  check_points(xs);
  const Eigen::Index m = s.m;
  LinearRhs rhs{s, theta, 0, true, false, {}, {}, {}};
  Mat y = initial_phi_S(s, theta, false, 0, true);
  SolutionField f = make_field(FieldKind::PhiAdjoint, theta, xs);
  run_segments(rhs, y, s.breakpoints(), cell_edges(s), xs, opt, [&](std::size_t k, const Mat& v) {
    f.value[k] = v.topRows(m).transpose();
    f.deriv[k] = v.bottomRows(m).transpose();
  });
  return f;
}

SolutionField solve_P(const PencilSpec& s, int sign, const std::vector<double>& xs, const OdeOptions& opt) {
  check_points(xs);
  const Eigen::Index m = s.m;
  Mat q;
  auto rhs = [&](double x, const Mat& y, Mat& dy) {
    s.Q1.eval(x, q);
    dy.noalias() = double(sign) * (q * y);
  };
  Mat y = eye(m);
  SolutionField f = make_field(sign > 0 ? FieldKind::PPlus : FieldKind::PMinus, 0.0, xs);
  run_segments(rhs, y, s.breakpoints(), cell_edges(s), xs, opt, [&](std::size_t k, const Mat& v) {
    f.value[k] = v;
    s.Q1.eval(xs[k], q);
    f.deriv[k] = double(sign) * (q * v);
  });
  return f;
}

std::vector<Mat> wronskian(const SolutionField& z, const SolutionField& y) {
  if (z.size() != y.size()) fail(ErrorKind::Validation, "wronskian: fields on different points");
  std::vector<Mat> w(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) w[k] = z.deriv[k] * y.value[k] - z.value[k] * y.deriv[k];
  return w;
}

EndpointJet endpoint_jet(const PencilSpec& s, cplx rho, int order, bool with_S, const OdeOptions& opt) {
  check_growth(rho);
  const Eigen::Index m = s.m;
  LinearRhs rhs{s, rho, order, false, false, {}, {}, {}};
  Mat y = initial_phi_S(s, rho, with_S, order, false);
  if (s.Q1.is_constant() && s.Q0.is_constant()) {
    // Constant coefficients: y(pi) = exp(pi L) y(0) with L the system matrix.
    const Eigen::Index n = y.rows();
    const Mat id = Mat::Identity(n, n);
    Mat L(n, n);
    rhs(0.0, id, L);
    y = expm(kPi * L) * y;
  } else {
    run_segments(rhs, y, s.breakpoints(), cell_edges(s), {}, opt, [](std::size_t, const Mat&) {});
  }
  EndpointJet j;
  for (int b = 0; b <= order; ++b) {
    j.phi.push_back(y.block(2 * m * b, 0, m, m));
    j.dphi.push_back(y.block(2 * m * b + m, 0, m, m));
    if (with_S) {
      j.S.push_back(y.block(2 * m * b, m, m, m));
      j.dS.push_back(y.block(2 * m * b + m, m, m, m));
    }
  }
  return j;
}

SolutionField param_derivative(const PencilSpec& s, cplx rho, int k, const std::vector<double>& xs,
                               const OdeOptions& opt) {
  if (k < 0 || k > 2) fail(ErrorKind::Validation, "param_derivative: order must be 0, 1 or 2");
  check_growth(rho);
  check_points(xs);
  const Eigen::Index m = s.m;
  LinearRhs rhs{s, rho, k, false, false, {}, {}, {}};
  Mat y = initial_phi_S(s, rho, false, k, false);
  SolutionField f = make_field(k == 0 ? FieldKind::Phi : FieldKind::Other, rho, xs);
  run_segments(rhs, y, s.breakpoints(), cell_edges(s), xs, opt, [&](std::size_t i, const Mat& v) {
    f.value[i] = v.middleRows(2 * m * k, m);
    f.deriv[i] = v.middleRows(2 * m * k + m, m);
  });
  return f;
}

std::vector<Mat> kernel_D_integral(const PencilSpec& s, const std::vector<double>& xs, cplx rho,
                                   cplx theta, const OdeOptions& opt) {
  check_growth(rho);
  check_growth(theta);
  check_points(xs);
  const Eigen::Index m = s.m;
  Mat C, Ct, Q1v, K, tmp;
  auto rhs = [&](double x, const Mat& y, Mat& dy) {
    s.coefficient(x, rho, C, Q1v);
    s.coefficient(x, theta, Ct, Q1v);
    dy.middleRows(0, m) = y.middleRows(m, m);
    dy.middleRows(m, m).noalias() = -C * y.middleRows(0, m);
    dy.middleRows(2 * m, m) = y.middleRows(3 * m, m);
    dy.middleRows(3 * m, m).noalias() = -Ct.transpose() * y.middleRows(2 * m, m);
    K.noalias() = (2.0 * kI) * Q1v;
    K.diagonal().array() += rho + theta;
    tmp.noalias() = K * y.middleRows(0, m);
    dy.middleRows(4 * m, m).noalias() = y.middleRows(2 * m, m).transpose() * tmp;
  };
  Mat y = Mat::Zero(5 * m, m);
  y.middleRows(0, m).setIdentity();
  y.middleRows(m, m) = -(kI * rho * s.h1 + s.h0);
  y.middleRows(2 * m, m).setIdentity();
  y.middleRows(3 * m, m) = -(kI * theta * s.h1 + s.h0).transpose();
  y.middleRows(4 * m, m) = kI * s.h1;
  std::vector<Mat> d(xs.size());
  run_segments(rhs, y, s.breakpoints(), cell_edges(s), xs, opt,
               [&](std::size_t k, const Mat& v) { d[k] = v.middleRows(4 * m, m); });
  return d;
}

KernelValues kernel_D(const PencilSpec& s, const std::vector<double>& xs, cplx rho, cplx theta,
                      const OdeOptions& opt) {
  SolutionField y = solve_phi(s, rho, xs, opt);
  SolutionField z = solve_phi_adjoint(s, theta, xs, opt);
  KernelValues kv;
  kv.D.resize(xs.size());
  kv.Dx.resize(xs.size());
  Mat q;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    s.Q1.eval(xs[k], q);
    Mat K = (2.0 * kI) * q;
    K.diagonal().array() += rho + theta;
    kv.Dx[k] = z.value[k] * K * y.value[k];
  }
  if (std::abs(rho - theta) < kernel_switch(rho)) {
    kv.D = kernel_D_integral(s, xs, rho, theta, opt);
    kv.integral_form = true;
  } else {
    std::vector<Mat> w = wronskian(z, y);
    for (std::size_t k = 0; k < xs.size(); ++k) kv.D[k] = w[k] / (rho - theta);
  }
  return kv;
}

}  // namespace qpencil
