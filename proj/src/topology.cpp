#include "holonome/topology.hpp"

#include <algorithm>

#include "holonome/errors.hpp"

namespace holonome {

namespace {

std::int64_t add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw ConfigError("integer overflow in polynomial arithmetic");
  return r;
}

std::int64_t mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw ConfigError("integer overflow in polynomial arithmetic");
  return r;
}

std::int64_t sub(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_sub_overflow(a, b, &r)) throw ConfigError("integer overflow in polynomial arithmetic");
  return r;
}

std::int64_t chi(const std::vector<std::int64_t>& betti) { return PolyZ(betti).eval(-1); }

}  // namespace

PolyZ::PolyZ(std::vector<std::int64_t> c) : coeffs(std::move(c)) {
  while (!coeffs.empty() && coeffs.back() == 0) coeffs.pop_back();
}

std::int64_t PolyZ::coeff(int p) const {
  return p >= 0 && p < static_cast<int>(coeffs.size()) ? coeffs[p] : 0;
}

std::int64_t PolyZ::eval(std::int64_t x) const {
  std::int64_t acc = 0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = add(mul(acc, x), *it);
  return acc;
}

PolyZ PolyZ::operator+(const PolyZ& o) const {
  std::vector<std::int64_t> c(std::max(coeffs.size(), o.coeffs.size()), 0);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = add(coeff(int(i)), o.coeff(int(i)));
  return PolyZ(std::move(c));
}

PolyZ PolyZ::operator-(const PolyZ& o) const {
  std::vector<std::int64_t> c(std::max(coeffs.size(), o.coeffs.size()), 0);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = sub(coeff(int(i)), o.coeff(int(i)));
  return PolyZ(std::move(c));
}

std::string PolyZ::to_string() const {
  if (coeffs.empty()) return "0";
  std::string s;
  for (std::size_t p = 0; p < coeffs.size(); ++p) {
    std::int64_t c = coeffs[p];
    if (c == 0) continue;
    if (!s.empty()) s += c < 0 ? " - " : " + ";
    else if (c < 0) s += "-";
    const std::int64_t a = c < 0 ? -c : c;
    if (p == 0 || a != 1) s += std::to_string(a);
    if (p >= 1) s += "λ";
    if (p >= 2) s += "^" + std::to_string(p);
  }
  return s;
}

PolyZ shifted_sum(const std::vector<ComponentTopology>& components) {
  PolyZ total;
  for (const auto& c : components) {
    std::vector<std::int64_t> shifted(c.index, 0);
    shifted.insert(shifted.end(), c.betti.begin(), c.betti.end());
    total = total + PolyZ(std::move(shifted));
  }
  return total;
}

QResult q_polynomial(const std::vector<ComponentTopology>& components, const std::vector<std::int64_t>& ambient_betti) {
  QResult out;
  out.shifted = shifted_sum(components);
  out.ambient = PolyZ(ambient_betti);
  const PolyZ diff = out.shifted - out.ambient;
  // Synthetic division by (λ + 1): quotient from the top coefficient down.
  const int d = diff.degree();
  if (d <= 0) {
    out.remainder = diff.coeff(0);
  } else {
    std::vector<std::int64_t> q(d, 0);
    std::int64_t carry = 0;
    for (int p = d; p >= 1; --p) {
      carry = sub(diff.coeffs[p], carry);
      q[p - 1] = carry;
    }
    out.remainder = sub(diff.coeffs[0], q[0]);
    out.quotient = PolyZ(std::move(q));
  }
  if (out.remainder != 0) {
    out.violation = "(1 + λ) does not divide shifted_sum - ambient: remainder " + std::to_string(out.remainder);
    return out;
  }
  for (int p = 0; p <= out.quotient.degree(); ++p) {
    if (out.quotient.coeffs[p] < 0) {
      out.violation = "Q has negative coefficient " + std::to_string(out.quotient.coeffs[p]) + " at degree " +
                      std::to_string(p);
      return out;
    }
  }
  out.ok = true;
  return out;
}

std::vector<MorseInequality> morse_inequalities(const std::vector<ComponentTopology>& components,
                                                const std::vector<std::int64_t>& ambient_betti) {
  const PolyZ s = shifted_sum(components), a(ambient_betti);
  std::vector<MorseInequality> out;
  const int top = std::max({s.degree(), a.degree(), 0});
  for (int p = 0; p <= top; ++p) {
    MorseInequality m{p, s.coeff(p), a.coeff(p), false};
    m.holds = m.lhs >= m.rhs;
    out.push_back(m);
  }
  return out;
}

EulerCheck euler_check(const std::vector<ComponentTopology>& components, const std::vector<std::int64_t>& ambient_betti) {
  EulerCheck e;
  for (const auto& c : components) e.lhs = add(e.lhs, (c.index % 2 ? -1 : 1) * chi(c.betti));
  e.rhs = chi(ambient_betti);
  e.holds = e.lhs == e.rhs;
  return e;
}

namespace {

std::vector<std::int64_t> read_betti(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": betti must be an array of non-negative integers");
  std::vector<std::int64_t> out;
  for (const auto& b : j) {
    if (!b.is_number_integer() || b.get<std::int64_t>() < 0)
      throw ConfigError(where + ": betti must be an array of non-negative integers");
    out.push_back(b.get<std::int64_t>());
  }
  return out;
}

}  // namespace

TopologyInput parse_topology_input(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("ambient_betti") || !j.contains("components"))
    throw ConfigError("topology input needs 'ambient_betti' and 'components'");
  TopologyInput in;
  in.ambient_betti = read_betti(j["ambient_betti"], "ambient_betti");
  if (!j["components"].is_array()) throw ConfigError("'components' must be an array");
  for (std::size_t i = 0; i < j["components"].size(); ++i) {
    const auto& c = j["components"][i];
    const std::string where = "components[" + std::to_string(i) + "]";
    if (!c.is_object() || !c.contains("betti") || !c.contains("index"))
      throw ConfigError(where + ": needs 'betti' and 'index'");
    ComponentTopology t;
    t.label = c.value("label", where);
    t.betti = read_betti(c["betti"], where);
    if (!c["index"].is_number_integer() || c["index"].get<long long>() < 0 || c["index"].get<long long>() > 100000)
      throw ConfigError(where + ": index must be a non-negative integer");
    t.index = c["index"].get<int>();
    in.components.push_back(std::move(t));
  }
  return in;
}

nlohmann::json topology_verdict(const TopologyInput& in) {
  using nlohmann::json;
  const QResult q = q_polynomial(in.components, in.ambient_betti);
  json j;
  if (q.ok)
    j["verdict"] = q.quotient.is_zero() ? "identity holds, 𝒬 = 0" : "identity holds, 𝒬 = " + q.quotient.to_string();
  else
    j["verdict"] = "violation";
  j["identity_holds"] = q.ok;
  j["shifted_sum"] = q.shifted.coeffs;
  j["shifted_sum_text"] = q.shifted.to_string();
  j["ambient"] = q.ambient.coeffs;
  j["ambient_text"] = q.ambient.to_string();
  if (q.ok) {
    j["Q"] = q.quotient.coeffs;
  } else {
    j["violation"] = {{"detail", q.violation}, {"quotient", q.quotient.coeffs}, {"remainder", q.remainder}};
  }
  json mi = json::array();
  for (const auto& m : morse_inequalities(in.components, in.ambient_betti))
    mi.push_back({{"p", m.p}, {"lhs", m.lhs}, {"rhs", m.rhs}, {"holds", m.holds}});
  j["morse_inequalities"] = mi;
  const EulerCheck e = euler_check(in.components, in.ambient_betti);
  j["euler"] = {{"lhs", e.lhs}, {"rhs", e.rhs}, {"holds", e.holds}};
  return j;
}

}  // namespace holonome
