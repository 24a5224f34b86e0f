#include "qpencil/spectral_data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qpencil {

int AsymptoticFrame::group_of(int q) const {
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (std::find(groups[g].begin(), groups[g].end(), q) != groups[g].end()) return int(g);
  fail(ErrorKind::Validation, "frame: q outside every group");
}

double AsymptoticFrame::group_omega(int g) const {
  double s = 0.0;
  for (int q : groups[std::size_t(g)]) s += omega[std::size_t(q)];
  return s / double(groups[std::size_t(g)].size());
}

Mat AsymptoticFrame::selector(int g) const {
  Mat s = Mat::Zero(dim(), dim());
  for (int q : groups[std::size_t(g)]) s(q, q) = 1.0;
  return s;
}

Mat AsymptoticFrame::projector(int g) const { return W.adjoint() * selector(g) * W; }

std::vector<std::vector<int>> cluster_sorted(const std::vector<double>& v, double tol) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i == 0 || v[i] - v[i - 1] > tol)
      out.push_back({int(i)});
    else
      out.back().push_back(int(i));
  }
  return out;
}

const SpectralEntry* SpectralData::find(SpectralIndex idx, int q) const {
  for (const auto& e : entries)
    if (e.index == idx && e.q == q) return &e;
  return nullptr;
}

void SpectralData::sort() {
  auto key = [](const auto& a, const auto& b) {
    if (a.index.order_key() != b.index.order_key()) return a.index < b.index;
    return a.q < b.q;
  };
  std::sort(entries.begin(), entries.end(), key);
  std::sort(excluded.begin(), excluded.end(), key);
}

void require_regime(const SpectralData& sd) {
  std::ostringstream os;
  for (const auto& e : sd.entries) {
    if (std::abs(e.rho.imag()) > 1e-8)
      os << "N=0 regime violated: nonreal eigenvalue at (n=" << e.index.str() << ", q=" << e.q + 1
         << "), rho = " << e.rho << "\n";
    if (e.alpha.rows() != sd.m || e.alpha.cols() != sd.m)
      os << "weight matrix shape mismatch at (n=" << e.index.str() << ", q=" << e.q + 1 << ")\n";
  }
  for (const auto& e : sd.excluded)
    if (e.reason != kMultiplePole)
      os << "N=0 regime violated: (n=" << e.index.str() << ", q=" << e.q + 1 << ") at rho = " << e.rho
         << ": " << e.reason << "\n";
  if (!os.str().empty()) fail(ErrorKind::Regime, os.str());
}

}  // namespace qpencil
