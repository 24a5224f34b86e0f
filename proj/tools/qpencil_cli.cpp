#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qpencil/fixtures.hpp"
#include "qpencil/inverse.hpp"
#include "qpencil/io.hpp"
#include "qpencil/linalg.hpp"

using namespace qpencil;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string command;
  std::vector<std::string> inputs;
  std::string out_dir = ".";
  int nmax = 20;
  double ode_tol = 1e-12;
  double root_tol = 1e-12;
  int quad_nodes = 64;
  int grid = 257;
  int threads = 1;
  std::uint64_t seed = 1;
  bool require_selfadjoint = false;
  std::string fixture = "phase_well";
  // roundtrip thresholds
  double q_tol = 1e-2;
  double boundary_tol = 1e-3;
};

ForwardOptions forward_options(const RunConfig& c) {
  ForwardOptions o;
  o.nmax = c.nmax;
  o.ode.tol = c.ode_tol;
  o.root_tol = c.root_tol;
  o.quad_nodes = c.quad_nodes;
  o.threads = c.threads;
  o.require_selfadjoint = c.require_selfadjoint;
  return o;
}

InverseOptions inverse_options(const RunConfig& c) {
  InverseOptions io;
  io.nmax = c.nmax;
  io.nodes = c.grid;
  io.threads = c.threads;
  io.model.forward = forward_options(c);
  io.model.forward.global_count = false;
  io.model.nodes = c.grid;
  return io;
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

const std::string& input(const RunConfig& c) {
  if (c.inputs.empty()) fail(ErrorKind::Validation, c.command + ": --input is required");
  return c.inputs.front();
}

json cj(cplx v) { return json::array({v.real(), v.imag()}); }

json mj(const Mat& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(cj(a(i, j)));
    rows.push_back(row);
  }
  return rows;
}

std::string frame_report(const AsymptoticFrame& f, const Mat& h1) {
  json j;
  j["omega"] = f.omega;
  json mu = json::array();
  for (cplx v : f.mu) mu.push_back(cj(v));
  j["mu"] = mu;
  j["groups"] = f.groups;
  j["A"] = mj(f.A);
  j["W"] = mj(f.W);
  j["h1"] = mj(h1);
  j["unitarity_defect"] = unitarity_defect(f.A);
  return j.dump(2) + "\n";
}

// n, q, (rho - n - omega_q) n
std::string asymptotics_csv(const SpectralData& sd, const AsymptoticFrame& f) {
  std::ostringstream os;
  os << "n,q,re_scaled,im_scaled\n";
  for (const SpectralEntry& e : sd.entries) {
    if (e.index.is_zero()) continue;
    const cplx d = (e.rho - double(e.index.n) - f.omega[std::size_t(e.q)]) * double(e.index.n);
    os << e.index.n << "," << e.q + 1 << "," << csv_number(d.real()) << "," << csv_number(d.imag()) << "\n";
  }
  return os.str();
}

std::string run_log_json(const RunLog& log) {
  json steps = json::array();
  for (const StepLog& s : log.steps)
    steps.push_back({{"k", s.k},
                     {"delta_start", s.delta_start},
                     {"delta_end", s.delta_end},
                     {"model", s.model},
                     {"kappa", s.kappa},
                     {"max_cond", s.max_cond},
                     {"max_residual", s.max_residual},
                     {"points", s.points},
                     {"diam_constant", s.diam_constant},
                     {"h1_skew_defect", s.h1_skew_defect}});
  json j;
  j["steps"] = steps;
  j["selfadjoint_defect"] = log.selfadjoint_defect;
  return j.dump(2) + "\n";
}

std::string diagnostics_csv(const RunLog& log) {
  std::ostringstream os;
  os << "x,step,cond,residual,omega_sigma,zw_defect\n";
  for (const NodeLog& l : log.nodes)
    os << csv_number(l.x) << "," << l.step << "," << csv_number(l.cond) << "," << csv_number(l.residual) << ","
       << csv_number(l.omega_sigma) << "," << csv_number(l.zw_defect) << "\n";
  return os.str();
}

std::string coefficients_csv(const PencilSpec& s) {
  std::ostringstream os;
  os << "x,i,j,re_Q1,im_Q1,re_Q0,im_Q0\n";
  const std::vector<double> xs = s.Q1.node_positions();
  for (int k = 0; k < s.Q1.nodes(); ++k)
    for (Eigen::Index i = 0; i < s.m; ++i)
      for (Eigen::Index j = 0; j < s.m; ++j) {
        const cplx a = s.Q1[k](i, j), b = s.Q0[k](i, j);
        os << csv_number(xs[std::size_t(k)]) << "," << i + 1 << "," << j + 1 << "," << csv_number(a.real()) << ","
           << csv_number(a.imag()) << "," << csv_number(b.real()) << "," << csv_number(b.imag()) << "\n";
      }
  return os.str();
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

int cmd_forward(const RunConfig& c) {
  const PencilSpec spec = load_pencil(input(c));
  require_valid(spec, c.require_selfadjoint);
  const SpectralData sd = forward_spectral(spec, forward_options(c));
  fs::create_directories(c.out_dir);
  save_sd(out_path(c, "spectral_data.json"), sd);
  write_file(out_path(c, "eigenvalues.csv"), eigenvalue_csv(sd));
  write_file(out_path(c, "frame.json"), frame_report(*sd.frame, spec.h1));
  write_file(out_path(c, "asymptotics.csv"), asymptotics_csv(sd, *sd.frame));
  double im = 0.0;
  for (const SpectralEntry& e : sd.entries) im = std::max(im, std::abs(e.rho.imag()));
  log_line("forward: " + std::to_string(sd.entries.size()) + " entries, max |Im rho| " + std::to_string(im));
  if (!sd.excluded.empty()) {
    for (const ExcludedEntry& e : sd.excluded)
      log_line("regime: (n, q) = (" + e.index.str() + ", " + std::to_string(e.q + 1) + ") " + e.reason +
               " of multiplicity " + std::to_string(e.mult));
    return 3;
  }
  return 0;
}

int cmd_model(const RunConfig& c) {
  const SpectralData sd = load_sd(input(c));
  ModelOptions mo = inverse_options(c).model;
  const ModelResult r = estimate_model(sd, mo);
  fs::create_directories(c.out_dir);
  save_pencil(out_path(c, "model.json"), r.spec);
  save_sd(out_path(c, "model_spectral_data.json"), r.sd);
  write_file(out_path(c, "model_frame.json"), frame_report(r.frame, r.recipe.h1));
  log_line("model: h1 skew defect " + std::to_string(r.h1_skew_defect) + ", C0 residual " +
           std::to_string(r.c0_residual));
  return 0;
}

InverseResult run_inverse(const RunConfig& c, const SpectralData& sd) {
  InverseResult r = algorithm4(sd, inverse_options(c));
  for (const StepLog& s : r.log.steps)
    log_line("step " + std::to_string(s.k) + ": [" + std::to_string(s.delta_start) + ", " +
             std::to_string(s.delta_end) + "] " + s.model + ", max cond " + std::to_string(s.max_cond));
  return r;
}

void write_inverse(const RunConfig& c, const InverseResult& r) {
  fs::create_directories(c.out_dir);
  save_pencil(out_path(c, "recovered.json"), r.spec);
  write_file(out_path(c, "run_log.json"), run_log_json(r.log));
  write_file(out_path(c, "diagnostics.csv"), diagnostics_csv(r.log));
  write_file(out_path(c, "coefficients.csv"), coefficients_csv(r.spec));
}

int cmd_inverse(const RunConfig& c) {
  const SpectralData sd = load_sd(input(c));
  write_inverse(c, run_inverse(c, sd));
  return 0;
}

int cmd_roundtrip(const RunConfig& c) {
  const PencilSpec spec = load_pencil(input(c));
  require_valid(spec, c.require_selfadjoint);
  std::string stage = "forward";
  try {
    ForwardOptions fo = forward_options(c);
    fo.global_count = false;
    const SpectralData sd = forward_spectral(spec, fo);
    stage = "inverse";
    const InverseResult r = run_inverse(c, sd);
    write_inverse(c, r);
    const PencilDistance d = distance(spec, r.spec);
    std::printf("Q1 %.3e\nQ0 %.3e\nh1 %.3e\nh0 %.3e\nH1 %.3e\nH0 %.3e\n", d.Q1, d.Q0, d.h1, d.h0, d.H1, d.H0);
    const bool ok = d.Q1 <= c.q_tol && d.Q0 <= c.q_tol && std::max({d.h1, d.h0, d.H1, d.H0}) <= c.boundary_tol;
    return ok ? 0 : 4;
  } catch (const Error& e) {
    throw Error(e.kind(), stage + ": " + e.what());
  }
}

int cmd_check(const RunConfig& c) {
  int worst = 0;
  for (const std::string& path : c.inputs) {
    const json j = json::parse(read_file(path), nullptr, false);
    if (!j.is_discarded() && j.contains("entries")) {
      const SpectralData sd = load_sd(path);
      std::printf("%s: spectral data, m = %ld, %zu entries, %zu excluded\n", path.c_str(), long(sd.m),
                  sd.entries.size(), sd.excluded.size());
      continue;
    }
    const PencilSpec s = load_pencil(path);
    const ValidationReport r = validate(s, c.require_selfadjoint);
    std::printf("%s: pencil, m = %ld, %d nodes, self-adjoint defect %.3e, condition (I) margin %.3e\n", path.c_str(),
                long(s.m), s.nodes(), r.selfadjoint_defect, r.condition_one_margin);
    if (!r.ok()) {
      std::printf("%s", r.summary().c_str());
      worst = 2;
    }
  }
  return worst;
}

int cmd_fixture(const RunConfig& c) {
  PencilSpec s;
  if (c.fixture == "zero")
    s = zero_pencil(1, c.grid);
  else if (c.fixture == "phase")
    s = fixtures::phase(0.25, c.grid);
  else if (c.fixture == "phase_well")
    s = fixtures::phase_well(c.grid);
  else if (c.fixture == "coupled_well")
    s = fixtures::coupled_well(c.grid);
  else if (c.fixture == "random")
    s = fixtures::random_selfadjoint(c.seed, c.grid);
  else
    fail(ErrorKind::Validation, "unknown fixture '" + c.fixture + "'");
  fs::create_directories(c.out_dir);
  const std::string path = out_path(c, c.fixture + ".json");
  save_pencil(path, s);
  std::printf("%s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward and inverse spectral solver for matrix quadratic pencils on [0, pi]"};
  app.require_subcommand(1);
  RunConfig c;

  auto common = [&](CLI::App* s, bool inputs) {
    if (inputs) s->add_option("--input,-i", c.inputs, "Input file(s)")->check(CLI::ExistingFile);
    s->add_option("--out-dir,-o", c.out_dir, "Output directory");
    s->add_option("--nmax", c.nmax, "Largest |n| in the spectral window")->check(CLI::Range(2, 400));
    s->add_option("--ode-tol", c.ode_tol, "Integrator tolerance")->check(CLI::Range(1e-14, 1e-4));
    s->add_option("--root-tol", c.root_tol, "Root polishing tolerance")->check(CLI::Range(1e-15, 1e-4));
    s->add_option("--quad-nodes", c.quad_nodes, "Starting residue quadrature nodes")->check(CLI::Range(8, 4096));
    s->add_option("--grid", c.grid, "Coefficient grid nodes")->check(CLI::Range(17, 8193));
    s->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1, 256));
    s->add_option("--seed", c.seed, "Seed for randomized fixtures");
    s->add_flag("--require-selfadjoint", c.require_selfadjoint, "Reject pencils violating condition (II)");
  };
  auto* fwd = app.add_subcommand("forward", "Eigenvalues, weights and asymptotic frame of a pencil");
  common(fwd, true);
  auto* mdl = app.add_subcommand("model", "Model pencil from spectral data");
  common(mdl, true);
  auto* inv = app.add_subcommand("inverse", "Recover a pencil from spectral data");
  common(inv, true);
  auto* rt = app.add_subcommand("roundtrip", "Forward, inverse and error report for a pencil");
  common(rt, true);
  rt->add_option("--q-tol", c.q_tol, "Threshold for the coefficient errors");
  rt->add_option("--boundary-tol", c.boundary_tol, "Threshold for the boundary matrix errors");
  auto* chk = app.add_subcommand("check", "Validate pencil or spectral data files");
  common(chk, true);
  auto* fix = app.add_subcommand("fixture", "Write a built-in pencil");
  common(fix, false);
  fix->add_option("name", c.fixture, "zero | phase | phase_well | coupled_well | random")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  c.command = app.get_subcommands().front()->get_name();
  try {
    if (c.command == "forward") return cmd_forward(c);
    if (c.command == "model") return cmd_model(c);
    if (c.command == "inverse") return cmd_inverse(c);
    if (c.command == "roundtrip") return cmd_roundtrip(c);
    if (c.command == "check") return cmd_check(c);
    return cmd_fixture(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Validation: return 2;
      case ErrorKind::Regime: return 3;
      case ErrorKind::Numerical: return 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 4;
}
