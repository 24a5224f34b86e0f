#pragma once

#include <cstdint>

#include "qpencil/pencil.hpp"

namespace qpencil::fixtures {

// Q1 = i a, everything else zero (m = 1).
PencilSpec phase(double a, int nodes = 257);
// Q1 = 0.25 i, Q0 = -0.1 (1 + cos x) (m = 1).
PencilSpec phase_well(int nodes = 257);
// Two-channel pencil with constant skew-Hermitian Q1, Q0 <= 0 and zero boundary matrices.
PencilSpec coupled_well(int nodes = 257);
// Random smooth self-adjoint two-channel pencil; bounded coefficients.
PencilSpec random_selfadjoint(std::uint64_t seed, int nodes = 257);

}  // namespace qpencil::fixtures
