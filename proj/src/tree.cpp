#include "loopren/tree.hpp"

#include <algorithm>
#include <cassert>

#include "loopren/forest.hpp"

namespace loopren {

Rational mi_binom(const MultiIndex& k, const MultiIndex& l) {
  auto choose = [](long long n, long long r) -> long long {
    if (r < 0 || r > n) return 0;
    long long out = 1;
    for (long long i = 1; i <= r; ++i) out = out * (n - r + i) / i;
    return out;
  };
  return Rational(choose(k.kt, l.kt) * choose(k.kx, l.kx));
}

Rational mi_factorial(const MultiIndex& k) {
  long long out = 1;
  for (long long i = 2; i <= k.kt; ++i) out *= i;
  for (long long i = 2; i <= k.kx; ++i) out *= i;
  return Rational(out);
}

std::string degree_to_string(const Degree& d) {
  std::string s;
  if (!rat_is_zero(d.q) || d.m == 0) {
    s = std::to_string(d.q.numerator());
    if (d.q.denominator() != 1) s += "/" + std::to_string(d.q.denominator());
  }
  if (d.m != 0) {
    if (d.m > 0 && !s.empty()) s += "+";
    if (d.m == -1)
      s += "-";
    else if (d.m != 1)
      s += std::to_string(d.m) + "*";
    s += "kappa";
  }
  return s;
}

int edge_cmp(const Edge& a, const Edge& b) {
  if (a.noise != b.noise) return a.noise < b.noise ? -1 : 1;
  if (a.k != b.k) return a.k < b.k ? -1 : 1;
  return tree_cmp(*a.sub, *b.sub);
}

int tree_cmp(const Tree& a, const Tree& b) {
  if (a.edges != b.edges) return a.edges < b.edges ? -1 : 1;
  if (a.nodes != b.nodes) return a.nodes < b.nodes ? -1 : 1;
  if (a.n != b.n) return a.n < b.n ? -1 : 1;
  if (a.o != b.o) return a.o < b.o ? -1 : 1;
  if (a.kids.size() != b.kids.size()) return a.kids.size() < b.kids.size() ? -1 : 1;
  for (size_t i = 0; i < a.kids.size(); ++i) {
    int c = edge_cmp(a.kids[i], b.kids[i]);
    if (c != 0) return c;
  }
  return 0;
}

TreePtr make_tree(MultiIndex n, Degree o, std::vector<Edge> kids) {
  std::sort(kids.begin(), kids.end(), [](const Edge& a, const Edge& b) { return edge_cmp(a, b) < 0; });
  auto t = std::make_shared<Tree>();
  t->n = n;
  t->o = o;
  t->edges = 0;
  t->nodes = 1;
  for (const auto& e : kids) {
    t->edges += 1 + e.sub->edges;
    t->nodes += e.sub->nodes;
  }
  t->kids = std::move(kids);
  return t;
}

TreePtr one() {
  static const TreePtr unit = make_tree({}, {}, {});
  return unit;
}

TreePtr xpow(MultiIndex k) { return make_tree(k, {}, {}); }

TreePtr xi(int i) {
  assert(i >= 1);
  return make_tree({}, {}, {Edge{i, {}, one()}});
}

bool is_one(const TreePtr& t) { return t->edges == 0 && t->n.is_zero() && t->o.is_zero(); }

bool is_bare_monomial(const Tree& t) { return t.edges == 0 && t.o.is_zero(); }

std::optional<TreePtr> integ(MultiIndex k, const TreePtr& t) {
  if (is_bare_monomial(*t)) return std::nullopt;  // I_k vanishes on polynomials
  return make_tree({}, {}, {Edge{0, k, t}});
}

TreePtr mul(const TreePtr& a, const TreePtr& b) {
  std::vector<Edge> kids = a->kids;
  kids.insert(kids.end(), b->kids.begin(), b->kids.end());
  return make_tree(a->n + b->n, a->o + b->o, std::move(kids));
}

TreePtr with_extra_n(const TreePtr& t, MultiIndex add) {
  if (add.is_zero()) return t;
  return make_tree(t->n + add, t->o, t->kids);
}

TreePtr with_root_o(const TreePtr& t, Degree o) { return make_tree(t->n, o, t->kids); }

Degree edge_degree(const Edge& e) {
  if (e.noise > 0) return Degree{Rational(-3, 2), -1};
  return Degree{Rational(2) - Rational(e.k.weight()), 0};
}

Degree deg_minus(const Tree& t) {
  Degree d{Rational(t.n.weight()), 0};
  for (const auto& e : t.kids) {
    d += edge_degree(e);
    d += deg_minus(*e.sub);
  }
  return d;
}

Degree deg_plus(const Tree& t) {
  Degree d = deg_minus(t);
  // add the o decorations of every vertex
  struct Walk {
    static void go(const Tree& t, Degree& acc) {
      acc += t.o;
      for (const auto& e : t.kids) go(*e.sub, acc);
    }
  };
  Degree extra{};
  Walk::go(t, extra);
  return d + extra;
}

bool tplus_shape(const Tree& t) {
  for (const auto& e : t.kids)
    if (e.noise != 0) return false;
  return true;
}

bool tplus_factors_positive(const Tree& t) {
  if (!tplus_shape(t)) return false;
  for (const auto& e : t.kids) {
    Degree d = edge_degree(e) + deg_plus(*e.sub);
    if (!d.positive()) return false;
  }
  return true;
}

// ---- forests ----

Forest forest_unit() { return Forest{}; }

Forest forest_of(const TreePtr& t) {
  if (is_one(t)) return Forest{};
  return Forest{{t}};
}

Forest forest_mul(const Forest& a, const Forest& b) {
  Forest out;
  out.items.reserve(a.items.size() + b.items.size());
  std::merge(a.items.begin(), a.items.end(), b.items.begin(), b.items.end(),
             std::back_inserter(out.items), TreeLess{});
  return out;
}

int forest_cmp(const Forest& a, const Forest& b) {
  if (a.items.size() != b.items.size()) return a.items.size() < b.items.size() ? -1 : 1;
  for (size_t i = 0; i < a.items.size(); ++i) {
    int c = tree_cmp(*a.items[i], *b.items[i]);
    if (c != 0) return c;
  }
  return 0;
}

Degree forest_deg_minus(const Forest& f) {
  Degree d{};
  for (const auto& t : f.items) d += deg_minus(*t);
  return d;
}

Degree forest_deg_plus(const Forest& f) {
  Degree d{};
  for (const auto& t : f.items) d += deg_plus(*t);
  return d;
}

std::string forest_to_string(const Forest& f) {
  if (f.items.empty()) return "1";
  std::string s = "{";
  for (size_t i = 0; i < f.items.size(); ++i) {
    if (i) s += ", ";
    s += tree_to_string(*f.items[i]);
  }
  s += "}";
  return s;
}

}  // namespace loopren
