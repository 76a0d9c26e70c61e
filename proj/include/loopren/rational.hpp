#pragma once
#include <boost/rational.hpp>
#include <cstdint>
#include <optional>
#include <string>

namespace loopren {

using Rational = boost::rational<long long>;

// Exact rational -> string. Uses plain decimal notation when the denominator is
// of the form 2^a 5^b (so the expansion terminates), otherwise "p/q".
std::string rational_to_string(const Rational& r);

// Accepts "p", "p/q" and terminating decimals like "-3.5".
std::optional<Rational> parse_rational(const std::string& s);

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

// The installed boost::rational predates the C++20 rewritten-candidate rules:
// its heterogeneous operator==(Arg, rational) recurses into itself when the
// compiler rewrites rational == int back to it. Only compare Rational against
// Rational; these helpers cover the common literal cases.
inline bool rat_is_zero(const Rational& r) { return r.numerator() == 0; }
inline int rat_sign(const Rational& r) { return r.numerator() < 0 ? -1 : (r.numerator() > 0 ? 1 : 0); }

}  // namespace loopren
