#include <cctype>
#include <cmath>
#include <cstdlib>

#include "loopren/forest.hpp"
#include "loopren/tree.hpp"

namespace loopren {

std::string rational_to_string(const Rational& r) {
  long long num = r.numerator(), den = r.denominator();
  if (den == 1) return std::to_string(num);
  // terminating decimal when den = 2^a 5^b (kept short to avoid overflow)
  long long d = den;
  int a = 0, b = 0;
  while (d % 2 == 0) d /= 2, ++a;
  while (d % 5 == 0) d /= 5, ++b;
  int c = std::max(a, b);
  if (d == 1 && c <= 12 && std::llabs(num) < (1LL << 40)) {
    long long scale = 1;
    for (int i = 0; i < c - a; ++i) scale *= 2;
    for (int i = 0; i < c - b; ++i) scale *= 5;
    long long v = std::llabs(num) * scale;
    long long p10 = 1;
    for (int i = 0; i < c; ++i) p10 *= 10;
    std::string frac = std::to_string(v % p10);
    frac.insert(frac.begin(), c - frac.size(), '0');
    while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
    std::string s = (num < 0 ? "-" : "") + std::to_string(v / p10);
    if (!(frac.size() == 1 && frac[0] == '0')) s += "." + frac;
    return s;
  }
  return std::to_string(num) + "/" + std::to_string(den);
}

std::optional<Rational> parse_rational(const std::string& s) {
  size_t i = 0;
  auto fail = std::optional<Rational>{};
  if (s.empty()) return fail;
  long long sign = 1;
  if (s[i] == '-') sign = -1, ++i;
  else if (s[i] == '+') ++i;
  if (i >= s.size() || !std::isdigit((unsigned char)s[i])) return fail;
  long long whole = 0;
  while (i < s.size() && std::isdigit((unsigned char)s[i])) whole = whole * 10 + (s[i++] - '0');
  if (i == s.size()) return Rational(sign * whole);
  if (s[i] == '/') {
    ++i;
    if (i >= s.size() || !std::isdigit((unsigned char)s[i])) return fail;
    long long den = 0;
    while (i < s.size() && std::isdigit((unsigned char)s[i])) den = den * 10 + (s[i++] - '0');
    if (i != s.size() || den == 0) return fail;
    return Rational(sign * whole, den);
  }
  if (s[i] == '.') {
    ++i;
    long long frac = 0, den = 1;
    if (i >= s.size() || !std::isdigit((unsigned char)s[i])) return fail;
    while (i < s.size() && std::isdigit((unsigned char)s[i])) {
      frac = frac * 10 + (s[i++] - '0');
      den *= 10;
    }
    if (i != s.size()) return fail;
    return Rational(sign * (whole * den + frac), den);
  }
  return fail;
}

// ---- tree printing ----

static std::string mi_to_string(const MultiIndex& k) {
  return "(" + std::to_string(k.kt) + "," + std::to_string(k.kx) + ")";
}

static void print_factors(const Tree& t, std::string& out) {
  bool first = true;
  auto sep = [&] {
    if (!first) out += "*";
    first = false;
  };
  if (!t.n.is_zero()) {
    sep();
    out += "X^" + mi_to_string(t.n);
  }
  if (!t.o.is_zero()) {
    sep();
    out += "O[" + rational_to_string(t.o.q) + ";" + std::to_string(t.o.m) + "]";
  }
  for (const auto& e : t.kids) {
    sep();
    if (e.noise > 0) {
      out += "Xi(" + std::to_string(e.noise) + ")";
    } else {
      if (e.k.is_zero())
        out += "I(";
      else if (e.k.kt == 0 && e.k.kx == 1)
        out += "I'(";
      else
        out += "I[" + std::to_string(e.k.kt) + "," + std::to_string(e.k.kx) + "](";
      out += tree_to_string(*e.sub);
      out += ")";
    }
  }
  if (first) out += "1";
}

std::string tree_to_string(const Tree& t) {
  std::string out;
  print_factors(t, out);
  return out;
}

// ---- tree parsing (recursive descent over the same grammar) ----

namespace {

struct Parser {
  const std::string& s;
  size_t i = 0;
  std::string err;

  explicit Parser(const std::string& str) : s(str) {}

  void skip() {
    while (i < s.size() && std::isspace((unsigned char)s[i])) ++i;
  }
  bool eat(char c) {
    skip();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  bool expect(char c) {
    if (eat(c)) return true;
    err = std::string("expected '") + c + "' at position " + std::to_string(i);
    return false;
  }
  bool integer(long long& out) {
    skip();
    size_t j = i;
    long long sign = 1;
    if (j < s.size() && (s[j] == '-' || s[j] == '+')) {
      if (s[j] == '-') sign = -1;
      ++j;
    }
    if (j >= s.size() || !std::isdigit((unsigned char)s[j])) {
      err = "expected integer at position " + std::to_string(i);
      return false;
    }
    long long v = 0;
    while (j < s.size() && std::isdigit((unsigned char)s[j])) v = v * 10 + (s[j++] - '0');
    out = sign * v;
    i = j;
    return true;
  }
  bool rational(Rational& out) {
    skip();
    size_t j = i;
    if (j < s.size() && (s[j] == '-' || s[j] == '+')) ++j;
    while (j < s.size() && (std::isdigit((unsigned char)s[j]) || s[j] == '/' || s[j] == '.')) ++j;
    auto r = parse_rational(s.substr(i, j - i));
    if (!r) {
      err = "bad rational at position " + std::to_string(i);
      return false;
    }
    out = *r;
    i = j;
    return true;
  }
  bool multiindex(MultiIndex& k) {
    long long a, b;
    if (!expect('(') || !integer(a) || !expect(',') || !integer(b) || !expect(')')) return false;
    k = {a, b};
    return true;
  }

  // returns false on syntax error; zero result reported via `zero`
  bool product(TreePtr& out, bool& zero) {
    TreePtr acc;
    bool acc_zero = false;
    for (;;) {
      TreePtr a;
      bool a_zero = false;
      if (!atom(a, a_zero)) return false;
      if (a_zero)
        acc_zero = true;
      else
        acc = acc ? mul(acc, a) : a;
      if (!eat('*')) break;
    }
    zero = acc_zero;
    if (!zero && !acc) acc = one();
    out = acc;
    return true;
  }

  bool atom(TreePtr& out, bool& zero) {
    skip();
    zero = false;
    if (i >= s.size()) {
      err = "unexpected end of input";
      return false;
    }
    if (s[i] == '(') {
      ++i;
      if (!product(out, zero)) return false;
      return expect(')');
    }
    if (s[i] == '1') {
      ++i;
      out = one();
      return true;
    }
    if (s[i] == '0') {
      ++i;
      zero = true;
      out = one();
      return true;
    }
    if (s.compare(i, 3, "Xi(") == 0) {
      i += 2;
      long long idx;
      if (!expect('(') || !integer(idx) || !expect(')')) return false;
      if (idx < 1) {
        err = "noise index must be >= 1 (position " + std::to_string(i) + ")";
        return false;
      }
      out = xi((int)idx);
      return true;
    }
    if (s[i] == 'X') {
      ++i;
      MultiIndex k{0, 1};
      if (i < s.size() && s[i] == '^') {
        ++i;
        if (!multiindex(k)) return false;
      }
      out = xpow(k);
      return true;
    }
    if (s[i] == 'O') {
      ++i;
      Rational q;
      long long m;
      if (!expect('[') || !rational(q) || !expect(';') || !integer(m) || !expect(']')) return false;
      out = make_tree({}, Degree{q, m}, {});
      return true;
    }
    if (s[i] == 'I') {
      ++i;
      MultiIndex k{0, 0};
      if (i < s.size() && s[i] == '\'') {
        ++i;
        k = {0, 1};
      } else if (i < s.size() && s[i] == '[') {
        ++i;
        long long a, b;
        if (!integer(a) || !expect(',') || !integer(b) || !expect(']')) return false;
        k = {a, b};
      }
      TreePtr sub;
      bool sub_zero = false;
      if (!expect('(') || !product(sub, sub_zero) || !expect(')')) return false;
      if (sub_zero) {
        zero = true;
        out = one();
        return true;
      }
      auto r = integ(k, sub);
      if (!r) {
        zero = true;  // I_k of a bare monomial collapses
        out = one();
        return true;
      }
      out = *r;
      return true;
    }
    err = std::string("unexpected character '") + s[i] + "' at position " + std::to_string(i);
    return false;
  }
};

}  // namespace

std::optional<TreePtr> parse_tree(const std::string& s, std::string* err) {
  Parser p(s);
  TreePtr t;
  bool zero = false;
  if (err) err->clear();
  if (!p.product(t, zero)) {
    if (err) *err = p.err;
    return std::nullopt;
  }
  p.skip();
  if (p.i != s.size()) {
    if (err) *err = "trailing input at position " + std::to_string(p.i);
    return std::nullopt;
  }
  if (zero) return std::nullopt;  // exact zero, err left empty
  return t;
}

}  // namespace loopren
