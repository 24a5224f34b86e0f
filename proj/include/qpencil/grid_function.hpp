#pragma once

#include <functional>

#include "qpencil/types.hpp"

namespace qpencil {

// Matrix-valued function sampled on a uniform grid, evaluated by local
// polynomial interpolation (5-node stencils, order 4). Each cell uses one
// fixed stencil, so the interpolant is continuous and polynomial per cell.
// Stencils never straddle a breakpoint node.
class GridFunction {
 public:
  static constexpr int kStencil = 5;

  GridFunction() = default;
  GridFunction(double x0, double x1, std::vector<Mat> values, std::vector<int> breaks = {});

  static GridFunction constant(int nodes, const Mat& value, double x0 = 0.0, double x1 = kPi);
  static GridFunction sample(int nodes, Eigen::Index m, const std::function<Mat(double)>& f,
                             double x0 = 0.0, double x1 = kPi);

  int nodes() const { return int(values_.size()); }
  Eigen::Index dim() const { return values_.empty() ? 0 : values_.front().rows(); }
  double x0() const { return x0_; }
  double x1() const { return x1_; }
  double step() const { return h_; }
  double node(int i) const { return i == nodes() - 1 ? x1_ : x0_ + h_ * i; }
  std::vector<double> node_positions() const;

  const Mat& operator[](int i) const { return values_[std::size_t(i)]; }
  Mat& operator[](int i) { return values_[std::size_t(i)]; }
  const std::vector<Mat>& values() const { return values_; }

  bool is_constant() const;

  const std::vector<int>& breaks() const { return breaks_; }
  std::vector<double> break_positions() const;
  void set_breaks(std::vector<int> breaks);

  void eval(double x, Mat& out) const;
  void eval(double x, Mat& value, Mat& derivative) const;
  Mat operator()(double x) const;
  Mat derivative(double x) const;

  // Interpolation weights at x for nodes start..start+len-1; dw may be null.
  void stencil(double x, int& start, int& len, double* w, double* dw) const;

 private:

  double x0_ = 0.0, x1_ = kPi, h_ = 0.0;
  std::vector<Mat> values_;
  std::vector<int> breaks_;
};

double sup_distance(const GridFunction& a, const GridFunction& b);

}  // namespace qpencil
