#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qpencil {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

enum class ErrorKind { Validation, Regime, Numerical };

// Exit code mapping used by the command line tool: 2, 3 and 4.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

// Index set {-N..-1, -0, +0, 1..N}. For n != 0 sign must equal sign(n).
struct SpectralIndex {
  int n = 0;
  int sign = 1;

  static SpectralIndex make(int n, int zero_sign = 1) {
    return {n, n > 0 ? 1 : (n < 0 ? -1 : (zero_sign < 0 ? -1 : 1))};
  }
  bool is_zero() const { return n == 0; }
  int abs() const { return n < 0 ? -n : n; }
  // Monotone key: ... -1 < -0 < +0 < 1 ...
  int order_key() const { return n == 0 ? (sign < 0 ? 0 : 1) : (n < 0 ? 2 * n : 2 * n + 1); }
  std::string str() const {
    if (n == 0) return sign < 0 ? "-0" : "+0";
    return std::to_string(n);
  }
  friend bool operator==(const SpectralIndex& a, const SpectralIndex& b) {
    return a.n == b.n && a.sign == b.sign;
  }
  friend bool operator<(const SpectralIndex& a, const SpectralIndex& b) {
    return a.order_key() < b.order_key();
  }
};

}  // namespace qpencil
