#pragma once

#include <optional>

#include "qpencil/types.hpp"

namespace qpencil {

// A = W^dagger diag(mu) W with mu_q = exp(2 pi i omega_q), omega ascending.
struct AsymptoticFrame {
  Mat A, W;
  std::vector<cplx> mu;
  std::vector<double> omega;
  std::vector<std::vector<int>> groups;  // J_q as lists of q (0-based), ascending omega

  Eigen::Index dim() const { return W.rows(); }
  int group_of(int q) const;
  double group_omega(int g) const;
  Mat selector(int g) const;   // I_q for the group
  Mat projector(int g) const;  // W^dagger I_q W
};

// Groups consecutive sorted values whose gaps are at most tol.
std::vector<std::vector<int>> cluster_sorted(const std::vector<double>& sorted, double tol);

struct SpectralEntry {
  SpectralIndex index;
  int q = 0;  // 0-based
  cplx rho;
  int mult = 1;
  Mat alpha;
};

inline const std::string kMultiplePole = "multiple pole";
inline const std::string kNonrealPole = "nonreal eigenvalue";

struct ExcludedEntry {
  SpectralIndex index;
  int q = 0;
  cplx rho;
  int mult = 1;
  std::string reason;
};

struct SpectralData {
  Eigen::Index m = 1;
  int nmax = 0;
  std::vector<SpectralEntry> entries;  // sorted by (index, q)
  std::vector<ExcludedEntry> excluded;
  std::optional<AsymptoticFrame> frame;

  const SpectralEntry* find(SpectralIndex idx, int q) const;
  void sort();
};

// Throws Error(Regime) unless every entry is real. Excluded multiple poles are
// tolerated (the inverse solver requires the model to exclude the same indices).
void require_regime(const SpectralData& sd);

}  // namespace qpencil
