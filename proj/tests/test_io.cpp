#include "doctest.h"
#include "qpencil/fixtures.hpp"
#include "qpencil/forward.hpp"
#include "qpencil/io.hpp"

using namespace qpencil;

namespace {

bool exact_equal(const PencilSpec& a, const PencilSpec& b) {
  if (a.m != b.m || a.nodes() != b.nodes() || a.Q1.breaks() != b.Q1.breaks()) return false;
  for (int i = 0; i < a.nodes(); ++i)
    if (a.Q1[i] != b.Q1[i] || a.Q0[i] != b.Q0[i]) return false;
  return a.h1 == b.h1 && a.h0 == b.h0 && a.H1 == b.H1 && a.H0 == b.H0;
}

}  // namespace

TEST_CASE("pencil round trip is bit exact") {
  for (const PencilSpec& s : {zero_pencil(1), fixtures::random_selfadjoint(7, 33)}) {
    const PencilSpec back = pencil_from_json(pencil_to_json(s));
    CHECK(exact_equal(s, back));
  }
}

TEST_CASE("short grids are rejected") {
  PencilSpec s = zero_pencil(1, 3);
  CHECK_THROWS_WITH_AS(pencil_from_json(pencil_to_json(s)), doctest::Contains("G >= 4"), Error);
}

TEST_CASE("parse errors carry a line number") {
  try {
    pencil_from_json("{\n\"m\": 1,\n\"nodes\": ,\n}", "bad.json");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("bad.json:3") != std::string::npos);
  }
}

TEST_CASE("spectral data round trip and regime rejection") {
  ForwardOptions o;
  o.nmax = 3;
  const SpectralData sd = forward_spectral(fixtures::phase_well(65), o);
  const SpectralData back = sd_from_json(sd_to_json(sd));
  REQUIRE(back.entries.size() == sd.entries.size());
  for (std::size_t k = 0; k < sd.entries.size(); ++k) {
    CHECK(back.entries[k].rho == sd.entries[k].rho);
    CHECK(back.entries[k].alpha == sd.entries[k].alpha);
    CHECK(back.entries[k].index == sd.entries[k].index);
  }
  REQUIRE(back.frame.has_value());
  CHECK(back.frame->omega == sd.frame->omega);

  SpectralData bad = sd;
  bad.entries[2].rho += cplx(0.0, 1e-3);
  try {
    sd_from_json(sd_to_json(bad));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Regime);
    CHECK(std::string(e.what()).find("N=0 regime violated") != std::string::npos);
  }
}

TEST_CASE("csv numbers have 17 significant digits") {
  CHECK(csv_number(0.1) == "1.0000000000000001e-01");
  CHECK(std::stod(csv_number(kPi)) == kPi);
}
