#pragma once

// Poincaré-polynomial bookkeeping for critical manifolds with user-declared
// topology. Integer arithmetic only.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace holonome {

/// Integer polynomial, ascending degree, no trailing zeros (zero is {}).
struct PolyZ {
  std::vector<std::int64_t> coeffs;

  PolyZ() = default;
  explicit PolyZ(std::vector<std::int64_t> c);

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }  // -1 for zero
  bool is_zero() const { return coeffs.empty(); }
  std::int64_t coeff(int p) const;
  std::int64_t eval(std::int64_t x) const;
  PolyZ operator+(const PolyZ& o) const;
  PolyZ operator-(const PolyZ& o) const;
  bool operator==(const PolyZ& o) const = default;
  std::string to_string() const;  // "1 + 3λ + 3λ^2 + λ^3"
};

struct ComponentTopology {
  std::string label;
  std::vector<std::int64_t> betti;
  int index = 0;
};

/// Sum over components of λ^index times the Betti polynomial.
PolyZ shifted_sum(const std::vector<ComponentTopology>& components);

struct QResult {
  bool ok = false;       // Q exists with non-negative integer coefficients
  PolyZ shifted;
  PolyZ ambient;
  PolyZ quotient;        // (shifted - ambient) / (1 + λ), even when not ok
  std::int64_t remainder = 0;
  std::string violation;  // empty when ok
};

/// Q = (shifted_sum - ambient) / (1 + λ) by synthetic division at -1.
QResult q_polynomial(const std::vector<ComponentTopology>& components, const std::vector<std::int64_t>& ambient_betti);

struct MorseInequality {
  int p = 0;
  std::int64_t lhs = 0;  // sum_i b_{p - mu_i}(C_i)
  std::int64_t rhs = 0;  // b_p(M)
  bool holds = false;
};

/// One entry per degree 0..max(deg shifted, deg ambient).
std::vector<MorseInequality> morse_inequalities(const std::vector<ComponentTopology>& components,
                                                const std::vector<std::int64_t>& ambient_betti);

struct EulerCheck {
  std::int64_t lhs = 0;  // sum_i (-1)^mu_i chi(C_i)
  std::int64_t rhs = 0;  // chi(M)
  bool holds = false;
};
EulerCheck euler_check(const std::vector<ComponentTopology>& components, const std::vector<std::int64_t>& ambient_betti);

struct TopologyInput {
  std::vector<std::int64_t> ambient_betti;
  std::vector<ComponentTopology> components;
};

/// {ambient_betti: [..], components: [{label, betti, index}, ..]}.
/// ConfigError on missing keys, negative Betti numbers or negative indices.
TopologyInput parse_topology_input(const nlohmann::json& j);

/// Verdict JSON: verdict string, polynomials, Q or violation, Morse
/// inequalities and the Euler check.
nlohmann::json topology_verdict(const TopologyInput& in);

}  // namespace holonome
