#pragma once

#include <iosfwd>

#include "qpencil/pencil.hpp"
#include "qpencil/spectral_data.hpp"

namespace qpencil {

// JSON layout; complex numbers are [re, im], matrices are arrays of rows.
std::string pencil_to_json(const PencilSpec& spec);
PencilSpec pencil_from_json(const std::string& text, const std::string& origin = "<string>");
std::string sd_to_json(const SpectralData& sd);
// Rejects nonreal poles and non-simple exclusions with Error(Regime) when check_regime.
SpectralData sd_from_json(const std::string& text, bool check_regime = true,
                          const std::string& origin = "<string>");

void save_pencil(const std::string& path, const PencilSpec& spec);
PencilSpec load_pencil(const std::string& path);
void save_sd(const std::string& path, const SpectralData& sd);
SpectralData load_sd(const std::string& path, bool check_regime = true);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

// 17 significant digits, scientific notation.
std::string csv_number(double v);

// n, q, re_rho, im_rho, mult, norm_alpha, rank_alpha
std::string eigenvalue_csv(const SpectralData& sd);

}  // namespace qpencil
