#pragma once
#include <functional>
#include <map>
#include <utility>

#include "loopren/rational.hpp"

namespace loopren {

// Finite linear combination with exact rational coefficients. Zero terms are
// erased eagerly so equality of maps is equality of elements.
template <class K, class Less = std::less<K>>
struct LinComb {
  std::map<K, Rational, Less> terms;

  bool is_zero() const { return terms.empty(); }

  void add(const K& k, const Rational& c) {
    if (rat_is_zero(c)) return;
    auto it = terms.find(k);
    if (it == terms.end()) {
      terms.emplace(k, c);
    } else {
      it->second += c;
      if (rat_is_zero(it->second)) terms.erase(it);
    }
  }

  void add(const LinComb& other, const Rational& scale = Rational(1)) {
    for (const auto& [k, c] : other.terms) add(k, c * scale);
  }

  LinComb& operator*=(const Rational& s) {
    if (rat_is_zero(s)) {
      terms.clear();
      return *this;
    }
    for (auto& [k, c] : terms) c *= s;
    return *this;
  }

  bool operator==(const LinComb& other) const {
    if (terms.size() != other.terms.size()) return false;
    auto it = other.terms.begin();
    Less less;
    for (const auto& [k, c] : terms) {
      if (less(k, it->first) || less(it->first, k) || c != it->second) return false;
      ++it;
    }
    return true;
  }
};

template <class LA, class LB>
struct PairLess {
  template <class A, class B>
  bool operator()(const std::pair<A, B>& x, const std::pair<A, B>& y) const {
    LA la;
    if (la(x.first, y.first)) return true;
    if (la(y.first, x.first)) return false;
    return LB()(x.second, y.second);
  }
};

}  // namespace loopren
