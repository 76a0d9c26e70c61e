#pragma once
#include <compare>
#include <string>

#include "loopren/rational.hpp"

namespace loopren {

// Degrees live in Q + Q*kappa where kappa > 0 is a formal infinitesimal
// regularity loss. Comparison is lexicographic in (q, m): since every
// comparison in this code base involves finitely many degrees, it is the
// correct order for all sufficiently small kappa > 0.
struct Degree {
  Rational q{0};    // rational part
  long long m = 0;  // multiple of kappa

  std::strong_ordering operator<=>(const Degree&) const = default;
  bool operator==(const Degree&) const = default;

  Degree operator+(const Degree& o) const { return {q + o.q, m + o.m}; }
  Degree operator-(const Degree& o) const { return {q - o.q, m - o.m}; }
  Degree operator-() const { return {-q, -m}; }
  Degree& operator+=(const Degree& o) {
    q += o.q;
    m += o.m;
    return *this;
  }

  bool is_zero() const { return rat_is_zero(q) && m == 0; }
  bool positive() const { return *this > Degree{}; }
  bool negative() const { return *this < Degree{}; }

  // numeric value for a concrete small kappa (reports, sorting output)
  double value(double kappa = 1e-4) const { return to_double(q) + kappa * static_cast<double>(m); }
};

// e.g. "-3/2-kappa", "1/2", "-2*kappa"
std::string degree_to_string(const Degree& d);

}  // namespace loopren
