#include "qpencil/fixtures.hpp"

#include <cmath>
#include <random>

namespace qpencil::fixtures {

PencilSpec phase(double a, int nodes) {
  const Mat q1 = Mat::Constant(1, 1, kI * a);
  const Mat z = Mat::Zero(1, 1);
  return make_pencil(1, nodes, [&](double) { return q1; }, [&](double) { return z; }, z, z, z, z);
}

PencilSpec phase_well(int nodes) {
  const Mat q1 = Mat::Constant(1, 1, kI * 0.25);
  const Mat z = Mat::Zero(1, 1);
  return make_pencil(
      1, nodes, [&](double) { return q1; },
      [](double x) { return Mat::Constant(1, 1, -0.1 * (1.0 + std::cos(x))); }, z, z, z, z);
}

PencilSpec coupled_well(int nodes) {
  Mat q1(2, 2);
  q1 << kI * 0.3, cplx(0.03, 0.02), cplx(-0.03, 0.02), kI * 0.1;
  Mat w(2, 2);
  w << 1.0, 0.2, 0.2, 0.5;
  const Mat z = Mat::Zero(2, 2);
  return make_pencil(
      2, nodes, [&](double) { return q1; },
      [&](double x) { return Mat(-0.1 * (1.0 + std::cos(x)) * w); }, z, z, z, z);
}

PencilSpec random_selfadjoint(std::uint64_t seed, int nodes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rand_mat = [&](double scale) {
    Mat a(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) = scale * cplx(u(rng), u(rng));
    return a;
  };
  auto skew = [](const Mat& a) { return Mat(0.5 * (a - a.adjoint())); };
  auto herm = [](const Mat& a) { return Mat(0.5 * (a + a.adjoint())); };
  const Mat a1 = skew(rand_mat(0.3)), b1 = skew(rand_mat(0.2));
  const Mat a0 = herm(rand_mat(0.5)), b0 = herm(rand_mat(0.5));
  const double k = 1.0 + std::floor(2.0 * (u(rng) + 1.0));
  return make_pencil(
      2, nodes, [&](double x) { return Mat(a1 + b1 * std::cos(k * x)); },
      [&](double x) { return Mat(a0 + b0 * std::sin(x)); }, skew(rand_mat(0.3)),
      herm(rand_mat(0.3)), skew(rand_mat(0.3)), herm(rand_mat(0.3)));
}

}  // namespace qpencil::fixtures
