#include "qpencil/grid_function.hpp"

#include <algorithm>
#include <cmath>

namespace qpencil {

GridFunction::GridFunction(double x0, double x1, std::vector<Mat> values, std::vector<int> breaks)
    : x0_(x0), x1_(x1), values_(std::move(values)) {
  if (values_.size() < 2) fail(ErrorKind::Validation, "grid function needs at least 2 nodes");
  h_ = (x1_ - x0_) / double(values_.size() - 1);
  set_breaks(std::move(breaks));
}

GridFunction GridFunction::constant(int nodes, const Mat& value, double x0, double x1) {
  return GridFunction(x0, x1, std::vector<Mat>(std::size_t(nodes), value));
}

GridFunction GridFunction::sample(int nodes, Eigen::Index m, const std::function<Mat(double)>& f,
                                  double x0, double x1) {
  std::vector<Mat> v(static_cast<std::size_t>(nodes));
  const double h = (x1 - x0) / double(nodes - 1);
  for (int i = 0; i < nodes; ++i) {
    v[std::size_t(i)] = f(i == nodes - 1 ? x1 : x0 + h * i);
    if (v[std::size_t(i)].rows() != m || v[std::size_t(i)].cols() != m)
      fail(ErrorKind::Validation, "sampled value has wrong shape");
  }
  return GridFunction(x0, x1, std::move(v));
}

std::vector<double> GridFunction::node_positions() const {
  std::vector<double> x(values_.size());
  for (int i = 0; i < nodes(); ++i) x[std::size_t(i)] = node(i);
  return x;
}

std::vector<double> GridFunction::break_positions() const {
  std::vector<double> x;
  for (int b : breaks_) x.push_back(node(b));
  return x;
}

void GridFunction::set_breaks(std::vector<int> breaks) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  breaks_.clear();
  for (int b : breaks)
    if (b > 0 && b < nodes() - 1) breaks_.push_back(b);
}

void GridFunction::stencil(double x, int& start, int& len, double* w, double* dw) const {
  const double t = (x - x0_) / h_;
  int lo = 0, hi = nodes() - 1;
  for (int b : breaks_) {
    if (double(b) < t - 1e-12)
      lo = b;
    else {
      hi = b;
      break;
    }
  }
  len = std::min(kStencil, hi - lo + 1);
  const int cell = std::clamp(int(std::floor(t)), lo, hi - 1);
  start = std::clamp(cell - len / 2, lo, hi - len + 1);
  const double s = t - start;
  static constexpr double fact[kStencil] = {1, 1, 2, 6, 24};
  double d[kStencil], pre[kStencil + 1], suf[kStencil + 1];
  for (int k = 0; k < len; ++k) d[k] = s - k;
  pre[0] = 1.0;
  for (int k = 0; k < len; ++k) pre[k + 1] = pre[k] * d[k];
  suf[len] = 1.0;
  for (int k = len - 1; k >= 0; --k) suf[k] = suf[k + 1] * d[k];
  for (int j = 0; j < len; ++j) {
    const double den = ((len - 1 - j) % 2 ? -1.0 : 1.0) * fact[j] * fact[len - 1 - j];
    w[j] = pre[j] * suf[j + 1] / den;
    if (dw) {
      double dsum = 0.0;
      for (int k = 0; k < len; ++k) {
        if (k == j) continue;
        double p = 1.0;
        for (int l = 0; l < len; ++l)
          if (l != j && l != k) p *= d[l];
        dsum += p;
      }
      dw[j] = dsum / den / h_;
    }
  }
}

void GridFunction::eval(double x, Mat& out) const {
  int start, len;
  double w[kStencil];
  stencil(x, start, len, w, nullptr);
  out.noalias() = w[0] * values_[std::size_t(start)];
  for (int j = 1; j < len; ++j) out.noalias() += w[j] * values_[std::size_t(start + j)];
}

void GridFunction::eval(double x, Mat& value, Mat& derivative) const {
  int start, len;
  double w[kStencil], dw[kStencil];
  stencil(x, start, len, w, dw);
  value.noalias() = w[0] * values_[std::size_t(start)];
  derivative.noalias() = dw[0] * values_[std::size_t(start)];
  for (int j = 1; j < len; ++j) {
    value.noalias() += w[j] * values_[std::size_t(start + j)];
    derivative.noalias() += dw[j] * values_[std::size_t(start + j)];
  }
}

Mat GridFunction::operator()(double x) const {
  Mat out;
  eval(x, out);
  return out;
}

Mat GridFunction::derivative(double x) const {
  Mat v, d;
  eval(x, v, d);
  return d;
}

double sup_distance(const GridFunction& a, const GridFunction& b) {
  if (a.nodes() != b.nodes()) fail(ErrorKind::Validation, "grid functions on different grids");
  double d = 0.0;
  for (int i = 0; i < a.nodes(); ++i) d = std::max(d, (a[i] - b[i]).norm());
  return d;
}

bool GridFunction::is_constant() const {
  for (const auto& v : values_)
    if (v != values_.front()) return false;
  return true;
}

}  // namespace qpencil
