#include "qpencil/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "qpencil/linalg.hpp"

namespace qpencil {

namespace {

using json = nlohmann::json;

[[noreturn]] void parse_fail(const std::string& origin, const std::string& field, const std::string& what) {
  fail(ErrorKind::Validation, origin + ": field '" + field + "': " + what);
}

json cplx_json(cplx v) { return json::array({v.real(), v.imag()}); }

json mat_json(const Mat& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(cplx_json(a(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

double real_of(const json& v, const std::string& origin, const std::string& field) {
  if (!v.is_number()) parse_fail(origin, field, "expected a number");
  return v.get<double>();
}

cplx cplx_of(const json& v, const std::string& origin, const std::string& field) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (!v.is_array() || v.size() != 2) parse_fail(origin, field, "expected [re, im]");
  return {real_of(v[0], origin, field), real_of(v[1], origin, field)};
}

Mat mat_of(const json& v, Eigen::Index m, const std::string& origin, const std::string& field) {
  if (!v.is_array() || Eigen::Index(v.size()) != m)
    parse_fail(origin, field, "expected " + std::to_string(m) + " rows");
  Mat a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const json& row = v[std::size_t(i)];
    if (!row.is_array() || Eigen::Index(row.size()) != m)
      parse_fail(origin, field, "row " + std::to_string(i) + " must have " + std::to_string(m) + " entries");
    for (Eigen::Index j = 0; j < m; ++j)
      a(i, j) = cplx_of(row[std::size_t(j)], origin, field + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  }
  return a;
}

const json& member(const json& obj, const char* key, const std::string& origin) {
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(origin, key, "missing");
  return *it;
}

json parse(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t k = 0; k < std::min(e.byte, text.size()); ++k)
      if (text[k] == '\n') ++line;
    fail(ErrorKind::Validation, origin + ":" + std::to_string(line) + ": parse error: " + e.what());
  }
}

json grid_json(const GridFunction& f) {
  json nodes = json::array();
  for (const Mat& v : f.values()) nodes.push_back(mat_json(v));
  return nodes;
}

GridFunction grid_of(const json& v, Eigen::Index m, int nodes, const std::vector<int>& breaks,
                     const std::string& origin, const std::string& field) {
  if (!v.is_array() || int(v.size()) != nodes)
    parse_fail(origin, field, "expected " + std::to_string(nodes) + " grid samples");
  std::vector<Mat> vals;
  for (std::size_t i = 0; i < v.size(); ++i)
    vals.push_back(mat_of(v[i], m, origin, field + "[" + std::to_string(i) + "]"));
  return GridFunction(0.0, kPi, std::move(vals), breaks);
}

json index_json(SpectralIndex idx, int q) { return {{"n", idx.n}, {"sign", idx.sign}, {"q", q + 1}}; }

void index_of(const json& e, Eigen::Index m, const std::string& origin, const std::string& where,
              SpectralIndex& idx, int& q) {
  const json& n = member(e, "n", origin);
  if (!n.is_number_integer()) parse_fail(origin, where + ".n", "expected an integer");
  idx.n = n.get<int>();
  idx.sign = idx.n > 0 ? 1 : -1;
  if (idx.n == 0) {
    const json& s = member(e, "sign", origin);
    if (!s.is_number_integer() || (s.get<int>() != 1 && s.get<int>() != -1))
      parse_fail(origin, where + ".sign", "the zero index needs sign +1 or -1");
    idx.sign = s.get<int>();
  } else if (idx.n < 0) {
    idx.sign = -1;
  }
  const json& qq = member(e, "q", origin);
  if (!qq.is_number_integer() || qq.get<int>() < 1 || qq.get<int>() > int(m))
    parse_fail(origin, where + ".q", "expected 1.." + std::to_string(m));
  q = qq.get<int>() - 1;
}

}  // namespace

std::string pencil_to_json(const PencilSpec& s) {
  json j;
  j["format"] = "qpencil-pencil";
  j["m"] = s.m;
  j["nodes"] = s.nodes();
  j["breaks"] = s.Q1.breaks();
  j["Q1"] = grid_json(s.Q1);
  j["Q0"] = grid_json(s.Q0);
  j["h1"] = mat_json(s.h1);
  j["h0"] = mat_json(s.h0);
  j["H1"] = mat_json(s.H1);
  j["H0"] = mat_json(s.H0);
  return j.dump(1) + "\n";
}

PencilSpec pencil_from_json(const std::string& text, const std::string& origin) {
  const json j = parse(text, origin);
  if (!j.is_object()) parse_fail(origin, "<root>", "expected an object");
  const json& mj = member(j, "m", origin);
  if (!mj.is_number_integer() || mj.get<int>() < 1) parse_fail(origin, "m", "expected a positive integer");
  const Eigen::Index m = mj.get<int>();
  const json& nj = member(j, "nodes", origin);
  if (!nj.is_number_integer()) parse_fail(origin, "nodes", "expected an integer");
  const int nodes = nj.get<int>();
  if (nodes < 5) parse_fail(origin, "nodes", "grid needs G >= 4 intervals, got " + std::to_string(nodes) + " nodes");
  std::vector<int> breaks;
  if (auto it = j.find("breaks"); it != j.end()) {
    if (!it->is_array()) parse_fail(origin, "breaks", "expected an array of node indices");
    for (const auto& b : *it) {
      if (!b.is_number_integer()) parse_fail(origin, "breaks", "expected integer node indices");
      breaks.push_back(b.get<int>());
    }
  }
  PencilSpec s;
  s.m = m;
  s.Q1 = grid_of(member(j, "Q1", origin), m, nodes, breaks, origin, "Q1");
  s.Q0 = grid_of(member(j, "Q0", origin), m, nodes, breaks, origin, "Q0");
  s.h1 = mat_of(member(j, "h1", origin), m, origin, "h1");
  s.h0 = mat_of(member(j, "h0", origin), m, origin, "h0");
  s.H1 = mat_of(member(j, "H1", origin), m, origin, "H1");
  s.H0 = mat_of(member(j, "H0", origin), m, origin, "H0");
  return s;
}

std::string sd_to_json(const SpectralData& sd) {
  json j;
  j["format"] = "qpencil-sd";
  j["m"] = sd.m;
  j["nmax"] = sd.nmax;
  json entries = json::array();
  for (const auto& e : sd.entries) {
    json r = index_json(e.index, e.q);
    r["rho"] = cplx_json(e.rho);
    r["mult"] = e.mult;
    r["alpha"] = mat_json(e.alpha);
    entries.push_back(std::move(r));
  }
  j["entries"] = std::move(entries);
  json ex = json::array();
  for (const auto& e : sd.excluded) {
    json r = index_json(e.index, e.q);
    r["rho"] = cplx_json(e.rho);
    r["mult"] = e.mult;
    r["reason"] = e.reason;
    ex.push_back(std::move(r));
  }
  j["excluded"] = std::move(ex);
  if (sd.frame) {
    const AsymptoticFrame& f = *sd.frame;
    json fr;
    fr["A"] = mat_json(f.A);
    fr["W"] = mat_json(f.W);
    json mu = json::array();
    for (cplx v : f.mu) mu.push_back(cplx_json(v));
    fr["mu"] = std::move(mu);
    fr["omega"] = f.omega;
    json groups = json::array();
    for (const auto& g : f.groups) {
      json gg = json::array();
      for (int q : g) gg.push_back(q + 1);
      groups.push_back(std::move(gg));
    }
    fr["groups"] = std::move(groups);
    j["frame"] = std::move(fr);
  }
  return j.dump(1) + "\n";
}

SpectralData sd_from_json(const std::string& text, bool check_regime, const std::string& origin) {
  const json j = parse(text, origin);
  if (!j.is_object()) parse_fail(origin, "<root>", "expected an object");
  SpectralData sd;
  const json& mj = member(j, "m", origin);
  if (!mj.is_number_integer() || mj.get<int>() < 1) parse_fail(origin, "m", "expected a positive integer");
  sd.m = mj.get<int>();
  if (auto it = j.find("nmax"); it != j.end()) {
    if (!it->is_number_integer()) parse_fail(origin, "nmax", "expected an integer");
    sd.nmax = it->get<int>();
  }
  const json& entries = member(j, "entries", origin);
  if (!entries.is_array()) parse_fail(origin, "entries", "expected an array");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const json& e = entries[k];
    const std::string where = "entries[" + std::to_string(k) + "]";
    SpectralEntry r;
    index_of(e, sd.m, origin, where, r.index, r.q);
    r.rho = cplx_of(member(e, "rho", origin), origin, where + ".rho");
    if (auto it = e.find("mult"); it != e.end()) {
      if (!it->is_number_integer() || it->get<int>() < 1) parse_fail(origin, where + ".mult", "expected >= 1");
      r.mult = it->get<int>();
    }
    r.alpha = mat_of(member(e, "alpha", origin), sd.m, origin, where + ".alpha");
    sd.entries.push_back(std::move(r));
  }
  if (auto it = j.find("excluded"); it != j.end()) {
    if (!it->is_array()) parse_fail(origin, "excluded", "expected an array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const json& e = (*it)[k];
      const std::string where = "excluded[" + std::to_string(k) + "]";
      ExcludedEntry r;
      index_of(e, sd.m, origin, where, r.index, r.q);
      r.rho = cplx_of(member(e, "rho", origin), origin, where + ".rho");
      if (auto mit = e.find("mult"); mit != e.end() && mit->is_number_integer()) r.mult = mit->get<int>();
      const json& why = member(e, "reason", origin);
      if (!why.is_string()) parse_fail(origin, where + ".reason", "expected a string");
      r.reason = why.get<std::string>();
      sd.excluded.push_back(std::move(r));
    }
  }
  if (auto it = j.find("frame"); it != j.end() && !it->is_null()) {
    const json& fr = *it;
    AsymptoticFrame f;
    f.A = mat_of(member(fr, "A", origin), sd.m, origin, "frame.A");
    f.W = mat_of(member(fr, "W", origin), sd.m, origin, "frame.W");
    const json& mu = member(fr, "mu", origin);
    const json& om = member(fr, "omega", origin);
    if (!mu.is_array() || !om.is_array() || Eigen::Index(mu.size()) != sd.m || Eigen::Index(om.size()) != sd.m)
      parse_fail(origin, "frame", "mu and omega need m entries");
    for (std::size_t q = 0; q < mu.size(); ++q) {
      f.mu.push_back(cplx_of(mu[q], origin, "frame.mu"));
      f.omega.push_back(real_of(om[q], origin, "frame.omega"));
    }
    for (const auto& g : member(fr, "groups", origin)) {
      std::vector<int> gg;
      for (const auto& q : g) {
        if (!q.is_number_integer() || q.get<int>() < 1 || q.get<int>() > int(sd.m))
          parse_fail(origin, "frame.groups", "expected indices 1..m");
        gg.push_back(q.get<int>() - 1);
      }
      f.groups.push_back(std::move(gg));
    }
    sd.frame = std::move(f);
  }
  sd.sort();
  if (check_regime) require_regime(sd);
  return sd;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Validation, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Validation, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::Validation, "write failed for '" + path + "'");
}

void save_pencil(const std::string& path, const PencilSpec& spec) { write_file(path, pencil_to_json(spec)); }
PencilSpec load_pencil(const std::string& path) { return pencil_from_json(read_file(path), path); }
void save_sd(const std::string& path, const SpectralData& sd) { write_file(path, sd_to_json(sd)); }
SpectralData load_sd(const std::string& path, bool check_regime) {
  return sd_from_json(read_file(path), check_regime, path);
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

std::string eigenvalue_csv(const SpectralData& sd) {
  std::ostringstream os;
  os << "n,q,re_rho,im_rho,mult,norm_alpha,rank_alpha\n";
  for (const auto& e : sd.entries)
    os << e.index.str() << "," << e.q + 1 << "," << csv_number(e.rho.real()) << "," << csv_number(e.rho.imag())
       << "," << e.mult << "," << csv_number(e.alpha.norm()) << "," << numerical_rank(e.alpha, 1e-8) << "\n";
  return os.str();
}

}  // namespace qpencil
