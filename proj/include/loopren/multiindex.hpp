#pragma once
#include <array>
#include <compare>
#include <cstdint>

#include "loopren/rational.hpp"

namespace loopren {

// A space-time multi-index k = (k_t, k_x). The parabolic weight counts the time
// direction twice: |k| = 2 k_t + k_x.
struct MultiIndex {
  long long kt = 0;
  long long kx = 0;

  auto operator<=>(const MultiIndex&) const = default;

  long long weight() const { return 2 * kt + kx; }
  bool is_zero() const { return kt == 0 && kx == 0; }

  MultiIndex operator+(const MultiIndex& o) const { return {kt + o.kt, kx + o.kx}; }
  MultiIndex operator-(const MultiIndex& o) const { return {kt - o.kt, kx - o.kx}; }

  // componentwise l <= k
  bool dominates(const MultiIndex& l) const { return l.kt <= kt && l.kx <= kx; }
};

// binom(k, l) componentwise; requires l <= k componentwise.
Rational mi_binom(const MultiIndex& k, const MultiIndex& l);
// k! = kt! * kx!
Rational mi_factorial(const MultiIndex& k);

}  // namespace loopren
