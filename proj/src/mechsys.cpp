#include "holonome/mechsys.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "holonome/format.hpp"

namespace holonome {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct Entry {
  std::string value;
  int line = 0;
};
using Section = std::map<std::string, Entry>;

int bracket_balance(std::string_view s) {
  int b = 0;
  for (char c : s) {
    if (c == '[') ++b;
    if (c == ']') --b;
  }
  return b;
}

std::map<std::string, Section> split_sections(const std::string& text) {
  std::map<std::string, Section> out;
  std::istringstream in(text);
  std::string raw, current;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (out.count(current))
        throw ConfigError("line " + std::to_string(lineno) + ": duplicate section [" + current + "]");
      out[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    if (current.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": entry outside of any section");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    const int start = lineno;
    // Bracketed values may continue over several lines.
    while (bracket_balance(value) > 0 && std::getline(in, raw)) {
      ++lineno;
      value += " " + trim(raw.substr(0, raw.find('#')));
    }
    if (bracket_balance(value) != 0)
      throw ConfigError("line " + std::to_string(start) + ": unbalanced brackets in '" + key + "'");
    if (key.empty()) throw ConfigError("line " + std::to_string(start) + ": empty key");
    if (out[current].count(key))
      throw ConfigError("line " + std::to_string(start) + ": duplicate key '" + key + "'");
    out[current][key] = Entry{value, start};
  }
  return out;
}

// Splits "[a, b(c, d), [e]]" into top-level items.
std::vector<std::string> split_list(const std::string& value, const std::string& what, int line) {
  std::string v = trim(value);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ConfigError("line " + std::to_string(line) + ": '" + what + "' must be a bracketed list");
  v = v.substr(1, v.size() - 2);
  std::vector<std::string> items;
  int depth = 0;
  std::string cur;
  for (char c : v) {
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == ',' && depth == 0) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !items.empty()) items.push_back(trim(cur));
  for (const auto& it : items)
    if (it.empty()) throw ConfigError("line " + std::to_string(line) + ": empty item in '" + what + "'");
  return items;
}

bool parse_bool(const std::string& s, const std::string& what, int line) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("line " + std::to_string(line) + ": '" + what + "' expects true or false, got '" + s + "'");
}

double parse_number(const std::string& s, const std::string& what, int line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || !std::isfinite(v))
    throw ConfigError("line " + std::to_string(line) + ": '" + what + "' expects a number, got '" + s + "'");
  return v;
}

bool valid_name(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

const Entry& require(const Section& sec, const std::string& sname, const std::string& key) {
  auto it = sec.find(key);
  if (it == sec.end()) throw ConfigError("missing key '" + key + "' in [" + sname + "]");
  return it->second;
}

Expression parse_field(const std::string& text, const MechSystem& sys, const std::string& where,
                       int line) {
  try {
    return parse(text, sys.coord_names, sys.param_names);
  } catch (const UnknownIdentifierError& e) {
    throw ConfigError("line " + std::to_string(line) + ": " + where + ": unknown parameter or coordinate '" +
                      e.name() + "'");
  } catch (const ParseError& e) {
    throw ConfigError("line " + std::to_string(line) + ": " + where + ": " + e.what());
  }
}

std::string point_text(const Eigen::VectorXd& q) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < q.size(); ++i) s += (i ? ", " : "") + format_double(q(i));
  return s + ")";
}

}  // namespace

MechSystem load_system(const std::string& config_text) {
  const auto sections = split_sections(config_text);
  for (const auto& [name, _] : sections) {
    static const std::set<std::string> known = {"model", "metric", "potential", "constraints", "params"};
    if (!known.count(name)) throw ConfigError("unknown section [" + name + "]");
  }
  auto sec = [&](const std::string& name) -> const Section& {
    static const Section empty;
    auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  };
  if (!sections.count("model")) throw ConfigError("missing section [model]");

  MechSystem sys;
  const Section& model = sec("model");
  for (const auto& [key, e] : model) {
    static const std::set<std::string> keys = {"name", "coordinates", "periodic", "unconstrained",
                                               "search_lower", "search_upper"};
    if (!keys.count(key)) throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + key + "' in [model]");
  }
  sys.name = model.count("name") ? model.at("name").value : std::string("model");
  const Entry& coords = require(model, "model", "coordinates");
  sys.coord_names = split_list(coords.value, "coordinates", coords.line);
  sys.n = static_cast<int>(sys.coord_names.size());
  if (sys.n == 0) throw ConfigError("at least one coordinate required");
  for (const auto& c : sys.coord_names)
    if (!valid_name(c)) throw ConfigError("invalid coordinate name '" + c + "'");
  if (std::set<std::string>(sys.coord_names.begin(), sys.coord_names.end()).size() != sys.coord_names.size())
    throw ConfigError("duplicate coordinate names");

  sys.periodic.assign(sys.n, false);
  if (model.count("periodic")) {
    const Entry& e = model.at("periodic");
    auto items = split_list(e.value, "periodic", e.line);
    if (static_cast<int>(items.size()) != sys.n)
      throw ConfigError("dimension mismatch: " + std::to_string(items.size()) + " periodic flags for " +
                        std::to_string(sys.n) + " coordinates");
    for (int i = 0; i < sys.n; ++i) sys.periodic[i] = parse_bool(items[i], "periodic", e.line);
  }
  if (model.count("unconstrained"))
    sys.unconstrained = parse_bool(model.at("unconstrained").value, "unconstrained", model.at("unconstrained").line);
  for (const char* key : {"search_lower", "search_upper"}) {
    if (!model.count(key)) continue;
    const Entry& e = model.at(key);
    auto items = split_list(e.value, key, e.line);
    if (static_cast<int>(items.size()) != sys.n)
      throw ConfigError(std::string("dimension mismatch in '") + key + "'");
    Eigen::VectorXd v(sys.n);
    for (int i = 0; i < sys.n; ++i) v(i) = parse_number(items[i], key, e.line);
    (std::string(key) == "search_lower" ? sys.search_lower : sys.search_upper) = v;
  }

  for (const auto& [name, e] : sec("params")) {
    if (!valid_name(name)) throw ConfigError("line " + std::to_string(e.line) + ": invalid parameter name '" + name + "'");
    if (std::find(sys.coord_names.begin(), sys.coord_names.end(), name) != sys.coord_names.end())
      throw ConfigError("parameter '" + name + "' shadows a coordinate");
    sys.params[name] = parse_number(e.value, name, e.line);
    sys.param_names.push_back(name);
    sys.bound.push_back(sys.params[name]);
  }

  const Entry& ge = require(sec("metric"), "metric", "g");
  const auto gitems = split_list(ge.value, "g", ge.line);
  if (static_cast<int>(gitems.size()) != sys.n * sys.n)
    throw ConfigError("dimension mismatch: metric has " + std::to_string(gitems.size()) + " entries, expected " +
                      std::to_string(sys.n * sys.n) + " for " + std::to_string(sys.n) + " coordinates");
  for (std::size_t i = 0; i < gitems.size(); ++i)
    sys.g_exprs.push_back(parse_field(gitems[i], sys, "metric entry " + std::to_string(i), ge.line));

  const Entry& ue = require(sec("potential"), "potential", "U");
  sys.U = parse_field(ue.value, sys, "potential", ue.line);

  const Section& cons = sec("constraints");
  if (cons.count("zeta")) {
    const Entry& ze = cons.at("zeta");
    for (const auto& row : split_list(ze.value, "zeta", ze.line)) {
      auto entries = split_list(row, "zeta row", ze.line);
      if (static_cast<int>(entries.size()) != sys.n)
        throw ConfigError("dimension mismatch: constraint row has " + std::to_string(entries.size()) +
                          " entries, expected " + std::to_string(sys.n));
      std::vector<Expression> r;
      for (const auto& t : entries) r.push_back(parse_field(t, sys, "constraint", ze.line));
      sys.zeta.push_back(std::move(r));
    }
  }
  for (const auto& [key, e] : cons)
    if (key != "zeta") throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + key + "' in [constraints]");

  if (sys.unconstrained && !sys.zeta.empty())
    throw ConfigError("unconstrained = true but constraint rows were given");
  if (!sys.unconstrained && sys.zeta.empty())
    throw ConfigError("at least one constraint required (set unconstrained = true for a free system)");
  if (sys.num_constraints() >= sys.n)
    throw ConfigError("dimension mismatch: " + std::to_string(sys.num_constraints()) +
                      " constraints leave no admissible directions in " + std::to_string(sys.n) + " dimensions");
  return sys;
}

MechSystem load_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_system(ss.str());
}

MechSystem MechSystem::with_params(const ParamMap& overrides) const {
  MechSystem s = *this;
  for (const auto& [k, v] : overrides) {
    auto it = std::find(s.param_names.begin(), s.param_names.end(), k);
    if (it == s.param_names.end()) throw ConfigError("unknown parameter '" + k + "'");
    s.params[k] = v;
    s.bound[static_cast<std::size_t>(it - s.param_names.begin())] = v;
  }
  return s;
}

Eigen::VectorXd PhasePoint::state() const {
  Eigen::VectorXd x(q.size() + p.size());
  x << q, p;
  return x;
}

PhasePoint PhasePoint::from_state(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size() / 2;
  return PhasePoint{x.head(n), x.tail(n)};
}

Eigen::VectorXd wrap_coordinates(const MechSystem& sys, Eigen::VectorXd q) {
  for (int i = 0; i < sys.n; ++i)
    if (sys.periodic[i]) q(i) = wrap_angle(q(i));
  return q;
}

Eigen::VectorXd wrap_state(const MechSystem& sys, Eigen::VectorXd x) {
  x.head(sys.n) = wrap_coordinates(sys, x.head(sys.n));
  return x;
}

void check_metric_spd(const MechSystem& sys, const Eigen::MatrixXd& g, const Eigen::VectorXd& q) {
  (void)sys;
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  bool ok = g.allFinite() && (g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
  if (ok) {
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    ok = llt.info() == Eigen::Success;
  }
  if (!ok) throw NumericError("metric is not symmetric positive definite at q = " + point_text(q));
}

ExtensionAssembly assemble(const MechSystem& sys, const PhasePoint& x) {
  const auto a = assemble_t<double>(sys, as_span(x.q), as_span(x.p));
  const int n = sys.n;
  ExtensionAssembly out;
  out.g = values(a.geo.g);
  out.g_inv = values(a.geo.g_inv);
  out.E = values(a.geo.E);
  out.F = values(a.F);
  out.T = values(a.Tm);
  out.rho = values(a.geo.rho);
  out.rho_bar = Eigen::MatrixXd::Identity(n, n) - out.rho;
  out.piV = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  out.piV.topLeftCorner(n, n) = out.rho;
  out.piV.bottomLeftCorner(n, n) = -out.T;
  out.piV.bottomRightCorner(n, n) = out.rho.transpose();
  out.f = Eigen::Map<const Eigen::VectorXd>(a.f.data(), static_cast<Eigen::Index>(a.f.size()));
  out.dH_dq = Eigen::Map<const Eigen::VectorXd>(a.dH_dq.data(), n);
  out.dH_dp = Eigen::Map<const Eigen::VectorXd>(a.dH_dp.data(), n);
  out.H = a.H;
  return out;
}

ProjectorPair projectors(const MechSystem& sys, const Eigen::VectorXd& q) {
  const auto geo = point_geometry<double>(sys, as_span(q));
  ProjectorPair pp;
  pp.rho = values(geo.rho);
  pp.rho_bar = Eigen::MatrixXd::Identity(sys.n, sys.n) - pp.rho;
  pp.g_inv = values(geo.g_inv);
  return pp;
}

double hamiltonian(const MechSystem& sys, const PhasePoint& x) {
  const auto g = metric<double>(sys, as_span(x.q));
  const Eigen::MatrixXd gv = values(g);
  check_metric_spd(sys, gv, x.q);
  return 0.5 * x.p.dot(gv.llt().solve(x.p)) + sys.U.evaluate<double>(as_span(x.q), sys.bound);
}

Eigen::VectorXd constraint_values(const MechSystem& sys, const PhasePoint& x) {
  const auto geo = point_geometry<double>(sys, as_span(x.q));
  return values(geo.E).transpose() * values(geo.g_inv) * x.p;
}

double lyapunov(const MechSystem& sys, const PhasePoint& x) { return constraint_values(sys, x).squaredNorm(); }

Eigen::VectorXd extension_field(const MechSystem& sys, const Eigen::VectorXd& x) {
  const auto v = extension_field_t<double>(sys, as_span(x));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd extension_field_jacobian(const MechSystem& sys, const Eigen::VectorXd& x) {
  const auto xs = seed_variables<double>(as_span(x));
  const auto v = extension_field_t<D1>(sys, std::span<const D1>(xs));
  Eigen::MatrixXd J(v.size(), x.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (Eigen::Index j = 0; j < x.size(); ++j) J(i, j) = v[i].partial(static_cast<std::size_t>(j));
  return J;
}

PhasePoint physical_leaf_project(const MechSystem& sys, const PhasePoint& x) {
  const auto geo = point_geometry<double>(sys, as_span(x.q));
  return PhasePoint{x.q, values(geo.rho).transpose() * x.p};
}

HolderResiduals holder_residuals_at(const MechSystem& sys, const Eigen::VectorXd& x) {
  const int n = sys.n;
  const ExtensionAssembly a = assemble(sys, PhasePoint::from_state(x));
  const Eigen::VectorXd v = extension_field(sys, x);
  HolderResiduals r;
  r.velocity = (v.head(n) - a.rho * a.dH_dp).norm();
  r.force = (a.rho.transpose() * (v.tail(n) + a.dH_dq)).norm();
  r.leaf = (a.rho_bar * a.dH_dp).norm();
  return r;
}

double horizontality_residual(const MechSystem& sys, const Eigen::VectorXd& x) {
  const int n = sys.n;
  const auto pp = projectors(sys, x.head(n));
  return (pp.rho_bar * pp.g_inv * x.tail(n)).norm();
}

std::vector<VectorField> distribution_fields(const MechSystem& sys) {
  std::vector<VectorField> out;
  for (int c = 0; c < sys.n; ++c) {
    VectorField v;
    v.dim = sys.n;
    v.f0 = [sys, c](std::span<const double> q) { return point_geometry<double>(sys, q).rho.column(c); };
    v.f1 = [sys, c](std::span<const D1> q) { return point_geometry<D1>(sys, q).rho.column(c); };
    v.f2 = [sys, c](std::span<const D2> q) { return point_geometry<D2>(sys, q).rho.column(c); };
    out.push_back(std::move(v));
  }
  return out;
}

namespace {
Eigen::MatrixXd phase_projector_value(const MechSystem& sys, const Eigen::VectorXd& x) {
  return assemble(sys, PhasePoint::from_state(x)).piV;
}
}  // namespace

ProjectorField phase_projector_field(const MechSystem& sys) {
  ProjectorField pf;
  pf.dim = 2 * sys.n;
  pf.f0 = [sys](const Eigen::VectorXd& x) { return phase_projector_value(sys, x); };
  pf.derivatives = [sys](const Eigen::VectorXd& x) {
    const int n = sys.n;
    const auto xs = seed_variables<double>(as_span(x));
    std::span<const D1> s(xs);
    const auto a = assemble_t<D1>(sys, s.subspan(0, n), s.subspan(n, n));
    std::vector<Eigen::MatrixXd> d(2 * n, Eigen::MatrixXd::Zero(2 * n, 2 * n));
    for (int r = 0; r < 2 * n; ++r) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double drho = a.geo.rho(i, j).partial(r);
          d[r](i, j) = drho;
          d[r](n + j, n + i) = drho;
          d[r](n + i, j) = -a.Tm(i, j).partial(r);
        }
    }
    return d;
  };
  return pf;
}

std::vector<VectorField> phase_distribution_fields(const MechSystem& sys) {
  return projector_columns(phase_projector_field(sys));
}

}  // namespace holonome
