#include "qpencil/pencil.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qpencil/linalg.hpp"

namespace qpencil {

std::vector<double> PencilSpec::breakpoints() const {
  std::vector<double> b = Q1.break_positions();
  for (double x : Q0.break_positions()) b.push_back(x);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

void PencilSpec::coefficient(double x, cplx rho, Mat& out, Mat& work) const {
  if (Q1.breaks() != Q0.breaks() || Q1.nodes() != Q0.nodes()) {
    Q1.eval(x, work);
    Q0.eval(x, out);
  } else {
    int start, len;
    double w[GridFunction::kStencil];
    Q1.stencil(x, start, len, w, nullptr);
    work.noalias() = w[0] * Q1[start];
    out.noalias() = w[0] * Q0[start];
    for (int j = 1; j < len; ++j) {
      work.noalias() += w[j] * Q1[start + j];
      out.noalias() += w[j] * Q0[start + j];
    }
  }
  out.noalias() += (2.0 * kI * rho) * work;
  out.diagonal().array() += rho * rho;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& i : issues) os << i.condition << " violated at " << i.location << " (defect " << i.defect << ")\n";
  return os.str();
}

namespace {

bool finite(const Mat& a) { return a.allFinite(); }

void check_shape(ValidationReport& r, const char* name, const Mat& a, Eigen::Index m) {
  if (a.rows() != m || a.cols() != m)
    r.issues.push_back({"shape", name, double(std::max(a.rows(), a.cols()))});
  else if (!finite(a))
    r.issues.push_back({"finite", name, 0.0});
}

}  // namespace

ValidationReport validate(const PencilSpec& s, bool require_selfadjoint, double tol) {
  ValidationReport r;
  const Eigen::Index m = s.m;
  if (m < 1) {
    r.issues.push_back({"dimension", "m", double(m)});
    return r;
  }
  if (s.Q1.nodes() != s.Q0.nodes()) r.issues.push_back({"grid", "Q1/Q0 node count", 0.0});
  if (s.Q1.nodes() < 5) r.issues.push_back({"grid G >= 4", "Q1", double(s.Q1.nodes() - 1)});
  if (std::abs(s.Q1.x0()) > 1e-14 || std::abs(s.Q1.x1() - kPi) > 1e-14)
    r.issues.push_back({"grid", "interval is not [0, pi]", std::abs(s.Q1.x1() - kPi)});
  for (const char* name : {"h1", "h0", "H1", "H0"}) {
    const Mat& a = name[0] == 'h' ? (name[1] == '1' ? s.h1 : s.h0) : (name[1] == '1' ? s.H1 : s.H0);
    check_shape(r, name, a, m);
  }
  for (int i = 0; i < s.Q1.nodes() && i < s.Q0.nodes(); ++i) {
    check_shape(r, ("Q1 node " + std::to_string(i)).c_str(), s.Q1[i], m);
    check_shape(r, ("Q0 node " + std::to_string(i)).c_str(), s.Q0[i], m);
  }
  if (!r.ok()) return r;

  const Mat id = eye(m);
  double margin = std::numeric_limits<double>::infinity();
  const std::pair<const char*, Mat> cond_one[] = {
      {"I+h1", id + s.h1}, {"I-h1", id - s.h1}, {"I+H1", id + s.H1}, {"I-H1", id - s.H1}};
  for (const auto& [name, a] : cond_one) {
    const double smin = sigma_min(a);
    margin = std::min(margin, smin);
    if (smin <= kConditionOneFloor) r.issues.push_back({"condition (I)", name, smin});
  }
  r.condition_one_margin = margin;

  double worst = 0.0;
  auto sa = [&](const std::string& cond, const std::string& where, double d) {
    worst = std::max(worst, d);
    if (require_selfadjoint && d > tol) r.issues.push_back({cond, where, d});
  };
  for (int i = 0; i < s.Q1.nodes(); ++i) {
    sa("condition (II): Q1 skew-Hermitian", "x=" + std::to_string(s.Q1.node(i)), skew_defect(s.Q1[i]));
    sa("condition (II): Q0 Hermitian", "x=" + std::to_string(s.Q0.node(i)), hermitian_defect(s.Q0[i]));
  }
  sa("condition (II): h1 skew-Hermitian", "h1", skew_defect(s.h1));
  sa("condition (II): H1 skew-Hermitian", "H1", skew_defect(s.H1));
  sa("condition (II): h0 Hermitian", "h0", hermitian_defect(s.h0));
  sa("condition (II): H0 Hermitian", "H0", hermitian_defect(s.H0));
  r.selfadjoint_defect = worst;
  return r;
}

void require_valid(const PencilSpec& spec, bool require_selfadjoint) {
  ValidationReport r = validate(spec, require_selfadjoint);
  if (!r.ok()) fail(ErrorKind::Validation, "invalid pencil:\n" + r.summary());
}

double enforce_selfadjoint(PencilSpec& s) {
  double d = 0.0;
  auto fix = [&](Mat& a, bool skew) {
    Mat p = skew ? skew_part(a) : hermitian_part(a);
    d = std::max(d, (p - a).norm());
    a = p;
  };
  for (int i = 0; i < s.Q1.nodes(); ++i) {
    fix(s.Q1[i], true);
    fix(s.Q0[i], false);
  }
  fix(s.h1, true);
  fix(s.H1, true);
  fix(s.h0, false);
  fix(s.H0, false);
  return d;
}

Mat boundary_U(const PencilSpec& s, cplx rho, const Mat& y0, const Mat& dy0) {
  return dy0 + (kI * rho * s.h1 + s.h0) * y0;
}

Mat boundary_V(const PencilSpec& s, cplx rho, const Mat& ypi, const Mat& dypi) {
  return dypi + (kI * rho * s.H1 + s.H0) * ypi;
}

PencilSpec zero_pencil(Eigen::Index m, int nodes) {
  const Mat z = Mat::Zero(m, m);
  return make_pencil(m, nodes, [&](double) { return z; }, [&](double) { return z; }, z, z, z, z);
}

PencilSpec make_pencil(Eigen::Index m, int nodes, const std::function<Mat(double)>& q1,
                       const std::function<Mat(double)>& q0, Mat h1, Mat h0, Mat big_h1,
                       Mat big_h0) {
  PencilSpec s;
  s.m = m;
  s.Q1 = GridFunction::sample(nodes, m, q1);
  s.Q0 = GridFunction::sample(nodes, m, q0);
  s.h1 = std::move(h1);
  s.h0 = std::move(h0);
  s.H1 = std::move(big_h1);
  s.H0 = std::move(big_h0);
  return s;
}

double PencilDistance::boundary() const { return std::max({h1, h0, H1, H0}); }

PencilDistance distance(const PencilSpec& a, const PencilSpec& b) {
  PencilDistance d;
  d.Q1 = sup_distance(a.Q1, b.Q1);
  d.Q0 = sup_distance(a.Q0, b.Q0);
  d.h1 = (a.h1 - b.h1).norm();
  d.h0 = (a.h0 - b.h0).norm();
  d.H1 = (a.H1 - b.H1).norm();
  d.H0 = (a.H0 - b.H0).norm();
  return d;
}

}  // namespace qpencil
