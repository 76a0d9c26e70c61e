#include "loopren/hopf.hpp"

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "loopren/multiindex.hpp"
#include "loopren/structure.hpp"

namespace loopren {
namespace {

Degree two() { return Degree{Rational(2), 0}; }

// ---------------------------------------------------------------------------
// Recentring coproduct
// ---------------------------------------------------------------------------

PlusTensor tensor_unit_plus() {
  PlusTensor t;
  t.add({one(), one()}, Rational(1));
  return t;
}

PlusTensor tensor_mul(const PlusTensor& a, const PlusTensor& b) {
  PlusTensor out;
  for (const auto& [ka, ca] : a.terms)
    for (const auto& [kb, cb] : b.terms)
      out.add({mul(ka.first, kb.first), mul(ka.second, kb.second)}, ca * cb);
  return out;
}

using PlusMemo = std::map<TreePtr, PlusTensor, TreeLess>;

PlusTensor cp_tree(const TreePtr& t, PlusMemo& memo);

PlusTensor cp_full(const TreePtr& t) {
  PlusMemo memo;
  return cp_tree(t, memo);
}

// One kernel edge I_k(sub): wrap the left legs, plus the polynomial
// extraction X^l/l! ox I_{k+l}(sub) for every l keeping the factor strictly
// positive (everything else dies in the quotient).
PlusTensor cp_edge(const MultiIndex& k, const TreePtr& sub, PlusMemo& memo) {
  PlusTensor out;
  const PlusTensor inner = cp_tree(sub, memo);
  for (const auto& [ab, c] : inner.terms) {
    auto wrapped = integ(k, ab.first);
    if (wrapped) out.add({*wrapped, ab.second}, c);
  }
  const Degree base = deg_plus(*sub) + two();
  for (long long lt = 0;; ++lt) {
    if (!(base - Degree{Rational(k.weight() + 2 * lt), 0}).positive()) break;
    for (long long lx = 0;; ++lx) {
      const MultiIndex l{lt, lx};
      if (!(base - Degree{Rational((k + l).weight()), 0}).positive()) break;
      auto f = integ(k + l, sub);
      if (f) out.add({xpow(l), *f}, Rational(1) / mi_factorial(l));
    }
  }
  return out;
}

PlusTensor cp_tree(const TreePtr& t, PlusMemo& memo) {
  auto it = memo.find(t);
  if (it != memo.end()) return it->second;
  PlusTensor acc = tensor_unit_plus();
  if (!t->n.is_zero()) {
    PlusTensor xs;
    for (long long lt = 0; lt <= t->n.kt; ++lt)
      for (long long lx = 0; lx <= t->n.kx; ++lx) {
        const MultiIndex l{lt, lx};
        xs.add({xpow(l), xpow(t->n - l)}, mi_binom(t->n, l));
      }
    acc = tensor_mul(acc, xs);
  }
  if (!t->o.is_zero()) {
    PlusTensor os;
    os.add({with_root_o(one(), t->o), one()}, Rational(1));
    acc = tensor_mul(acc, os);
  }
  for (const Edge& e : t->kids) {
    PlusTensor part;
    if (e.noise > 0) {
      part.add({xi(e.noise), one()}, Rational(1));
    } else {
      part = cp_edge(e.k, e.sub, memo);
    }
    acc = tensor_mul(acc, part);
  }
  memo.emplace(t, acc);
  return acc;
}

// Strictly positive grade of every root I-factor (the reduction of positive
// monomials). Root polynomial/o decorations and -- defensively -- noise
// factors are left alone.
bool plus_factors_ok(const Tree& t) {
  for (const Edge& e : t.kids) {
    if (e.noise > 0) continue;
    if (!(deg_plus(*e.sub) + edge_degree(e)).positive()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Antipodes on the positive side
// ---------------------------------------------------------------------------

using ElemMemo = std::map<TreePtr, TreeElem, TreeLess>;

TreeElem ap_monomial(const TreePtr& t, bool twisted, ElemMemo& memo);

// Generator I_k(sub):  -(sum over l and the coproduct of sub of)
//   (-X)^l/l! * I_{k+l}(left) * Antipode(right),
// where the twisted variant keeps the per-step projection onto strictly
// positive total grade and does not drop non-positive wrapped factors.
TreeElem ap_generator(const MultiIndex& k, const TreePtr& sub, bool twisted, ElemMemo& memo) {
  auto gen = integ(k, sub);
  if (!gen) return {};
  auto it = memo.find(*gen);
  if (it != memo.end()) return it->second;

  TreeElem out;
  const PlusTensor dp = cp_full(sub);
  for (const auto& [ab, c] : dp.terms) {
    const TreePtr& a = ab.first;
    const TreeElem rec = ap_monomial(ab.second, twisted, memo);
    if (rec.terms.empty()) continue;
    Degree maxd = deg_plus(*rec.terms.begin()->first);
    for (const auto& [m, cm] : rec.terms) maxd = std::max(maxd, deg_plus(*m));
    const Degree base = deg_plus(*a) + two();
    long long wmax = -1;
    for (long long w = 0;; ++w) {
      const Degree dwrap = base - Degree{Rational(k.weight() + w), 0};
      const bool viable = twisted ? (dwrap + maxd).positive() : dwrap.positive();
      if (!viable) break;
      wmax = w;
    }
    for (long long lt = 0; 2 * lt <= wmax; ++lt)
      for (long long lx = 0; 2 * lt + lx <= wmax; ++lx) {
        const MultiIndex l{lt, lx};
        auto wrapped = integ(k + l, a);
        if (!wrapped) continue;
        if (!twisted && !deg_plus(**wrapped).positive()) continue;
        const Rational step = -c * ((lt + lx) % 2 ? Rational(-1) : Rational(1)) / mi_factorial(l);
        for (const auto& [m, cm] : rec.terms) {
          const TreePtr prod = mul(*wrapped, m);
          if (twisted && !deg_plus(*prod).positive()) continue;
          out.add(mul(xpow(l), prod), step * cm);
        }
      }
  }
  memo.emplace(*gen, out);
  return out;
}

TreeElem elem_mul(const TreeElem& a, const TreeElem& b) {
  TreeElem out;
  for (const auto& [ka, ca] : a.terms)
    for (const auto& [kb, cb] : b.terms) out.add(mul(ka, kb), ca * cb);
  return out;
}

TreeElem ap_monomial(const TreePtr& t, bool twisted, ElemMemo& memo) {
  TreeElem acc;
  const Rational sign = (t->n.kt + t->n.kx) % 2 ? Rational(-1) : Rational(1);
  acc.add(with_root_o(xpow(t->n), t->o), sign);
  for (const Edge& e : t->kids) {
    if (e.noise > 0) throw std::logic_error("antipode of a noise factor is undefined");
    acc = elem_mul(acc, ap_generator(e.k, e.sub, twisted, memo));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Extraction/contraction coproduct
// ---------------------------------------------------------------------------

// Flattened tree: vertex 0 is the root, vertices are numbered in preorder so
// parents precede children; vertex v > 0 doubles as the edge (par[v], v).
struct Flat {
  std::vector<int> par;
  std::vector<int> noisetype;      // type of edge into v, 0 = kernel
  std::vector<MultiIndex> ek;      // derivative decoration of edge into v
  std::vector<MultiIndex> vn;      // vertex polynomial decorations
  std::vector<Degree> vo;          // vertex o decorations
};

void flatten(const TreePtr& t, int parent, int noisetype, const MultiIndex& ek, Flat& f) {
  const int v = static_cast<int>(f.par.size());
  f.par.push_back(parent);
  f.noisetype.push_back(noisetype);
  f.ek.push_back(ek);
  f.vn.push_back(t->n);
  f.vo.push_back(t->o);
  for (const Edge& e : t->kids) flatten(e.sub, v, e.noise, e.noise > 0 ? MultiIndex{} : e.k, f);
}

Degree flat_edge_degree(const Flat& f, int v) {
  if (f.noisetype[v] > 0) return Degree{Rational(-3, 2), -1};
  return Degree{Rational(2 - f.ek[v].weight()), 0};
}

// One decoration slot of a component: either the polynomial split at a
// covered vertex (bounded by the vertex decoration) or the derivative picked
// up by a boundary incidence (edge outside the subforest, endpoint inside).
struct Slot {
  int vertex;       // decoration lands here
  int edge = -1;    // -1: polynomial split; otherwise bump this edge
  MultiIndex cap;   // upper bound for polynomial splits
};

struct Assignment {
  Rational coeff{1};
  std::vector<std::pair<int, MultiIndex>> nsplit;  // vertex -> n_A
  std::vector<std::pair<int, MultiIndex>> land;    // vertex -> landed derivative
  std::vector<std::pair<int, MultiIndex>> bump;    // edge   -> derivative bump
};

void enum_slots(const std::vector<Slot>& slots, std::size_t i, long long budget,
                Assignment cur, std::vector<Assignment>& out) {
  if (i == slots.size()) {
    out.push_back(std::move(cur));
    return;
  }
  const Slot& s = slots[i];
  const long long max_kt = s.edge < 0 ? std::min(s.cap.kt, budget / 2) : budget / 2;
  for (long long kt = 0; kt <= max_kt; ++kt) {
    const long long rem = budget - 2 * kt;
    const long long max_kx = s.edge < 0 ? std::min(s.cap.kx, rem) : rem;
    for (long long kx = 0; kx <= max_kx; ++kx) {
      const MultiIndex l{kt, kx};
      Assignment next = cur;
      if (s.edge < 0) {
        next.coeff *= mi_binom(s.cap, l);
        if (!l.is_zero()) next.nsplit.push_back({s.vertex, l});
      } else if (!l.is_zero()) {
        next.coeff /= mi_factorial(l);
        next.land.push_back({s.vertex, l});
        next.bump.push_back({s.edge, l});
      }
      enum_slots(slots, i + 1, budget - l.weight(), std::move(next), out);
    }
  }
}

struct MinusTerm {
  Forest left;
  TreePtr right;
  Rational coeff;
};

MultiIndex lookup_sum(const std::vector<std::pair<int, MultiIndex>>& v, int key) {
  MultiIndex out;
  for (const auto& [k, l] : v)
    if (k == key) out = out + l;
  return out;
}

// Build the tree of one extracted component (vertices with comp[] == c,
// edges of the subforest). Returns nullptr when the component collapses
// because a kernel edge ends in a bare monomial.
TreePtr build_component(const Flat& f, const std::vector<std::vector<int>>& children,
                        const std::vector<int>& comp, uint32_t S, int v,
                        const Assignment& as) {
  std::vector<Edge> kids;
  for (int w : children[v]) {
    if (!(S >> (w - 1) & 1)) continue;
    if (f.noisetype[w] > 0) {
      kids.push_back(Edge{f.noisetype[w], MultiIndex{}, one()});
    } else {
      TreePtr sub = build_component(f, children, comp, S, w, as);
      if (!sub) return nullptr;
      if (is_bare_monomial(*sub)) return nullptr;  // I_k(X^n) = 0
      kids.push_back(Edge{0, f.ek[w], sub});
    }
  }
  const MultiIndex n = lookup_sum(as.nsplit, v) + lookup_sum(as.land, v);
  return make_tree(n, f.vo[v], kids);
}

// Build the contracted right-hand tree from the edges outside the subforest.
// `image` maps original vertices to contracted node ids; `node_n`/`node_o`
// give the decorations of each contracted node id.
TreePtr build_right(const Flat& f, const std::vector<std::vector<int>>& node_edges,
                    const std::vector<int>& image, const Assignment& as,
                    const std::vector<MultiIndex>& node_n, const std::vector<Degree>& node_o,
                    int node) {
  std::vector<Edge> kids;
  for (int w : node_edges[node]) {
    if (f.noisetype[w] > 0) {
      kids.push_back(Edge{f.noisetype[w], MultiIndex{}, one()});
    } else {
      TreePtr sub = build_right(f, node_edges, image, as, node_n, node_o, image[w]);
      if (!sub) return nullptr;
      if (is_bare_monomial(*sub)) return nullptr;  // I_k(X^n) = 0
      kids.push_back(Edge{0, f.ek[w] + lookup_sum(as.bump, w), sub});
    }
  }
  return make_tree(node_n[node], node_o[node], kids);
}

std::vector<MinusTerm> minus_terms(const TreePtr& t, bool extended, bool keep_root_free = false) {
  Flat f;
  flatten(t, -1, 0, MultiIndex{}, f);
  const int V = static_cast<int>(f.par.size());
  const int nE = V - 1;
  if (nE > 24) throw std::runtime_error("tree too large for extraction enumeration");

  std::vector<std::vector<int>> children(V);
  for (int v = 1; v < V; ++v) children[f.par[v]].push_back(v);

  // `keep_root_free` forbids subforests that cover the root, i.e. any subset
  // containing a root-incident edge. Uncovered root edges still take part in
  // the derivative bookkeeping of the components hanging below them.
  uint32_t root_mask = 0;
  for (int v = 1; v < V; ++v)
    if (f.par[v] == 0) root_mask |= 1u << (v - 1);

  std::vector<MinusTerm> out;
  for (uint32_t S = 0; S < (1u << nE); ++S) {
    if (keep_root_free && (S & root_mask)) continue;
    // components of the covered vertices; preorder numbering means a child is
    // always labelled through its parent, so a single pass suffices
    std::vector<int> comp(V, -1);
    std::vector<int> top;  // top (root-most) vertex of each component
    for (int v = 1; v < V; ++v)
      if (S >> (v - 1) & 1) {
        const int p = f.par[v];
        if (comp[p] == -1) {
          comp[p] = static_cast<int>(top.size());
          top.push_back(p);
        }
        comp[v] = comp[p];
      }
    const int ncomp = static_cast<int>(top.size());

    // per-component degree of the extracted edges; everything a decoration
    // adds only raises it, so non-negative components kill the whole subset
    std::vector<Degree> base(ncomp, Degree{});
    for (int v = 1; v < V; ++v)
      if (S >> (v - 1) & 1) base[comp[v]] += flat_edge_degree(f, v);
    bool dead = false;
    std::vector<long long> budget(ncomp, 0);
    for (int c = 0; c < ncomp && !dead; ++c) {
      if (!base[c].negative()) {
        dead = true;
        break;
      }
      long long w = 0;
      while ((base[c] + Degree{Rational(w + 1), 0}).negative()) ++w;
      budget[c] = w;
    }
    if (dead) continue;

    // decoration slots per component
    std::vector<std::vector<Slot>> slots(ncomp);
    for (int v = 0; v < V; ++v)
      if (comp[v] >= 0 && !f.vn[v].is_zero()) slots[comp[v]].push_back(Slot{v, -1, f.vn[v]});
    for (int v = 1; v < V; ++v) {
      if (S >> (v - 1) & 1) continue;
      if (f.noisetype[v] > 0) continue;  // noise edges admit no derivative bump
      const int p = f.par[v];
      if (comp[p] >= 0) slots[comp[p]].push_back(Slot{p, v});
      if (comp[v] >= 0) slots[comp[v]].push_back(Slot{v, v});
    }

    std::vector<std::vector<Assignment>> comp_assign(ncomp);
    for (int c = 0; c < ncomp; ++c)
      enum_slots(slots[c], 0, budget[c], Assignment{}, comp_assign[c]);

    // contracted node layout shared by all assignments of this subset
    std::vector<int> image(V);
    int nnodes = ncomp;  // nodes 0..ncomp-1 are the contracted components
    std::vector<int> uncovered;
    for (int v = 0; v < V; ++v) {
      if (comp[v] >= 0) {
        image[v] = comp[v];
      } else {
        image[v] = nnodes++;
        uncovered.push_back(v);
      }
    }
    std::vector<std::vector<int>> node_edges(nnodes);
    for (int v = 1; v < V; ++v)
      if (!(S >> (v - 1) & 1)) node_edges[image[f.par[v]]].push_back(v);

    // cartesian product over the per-component assignment lists
    std::vector<std::size_t> pick(ncomp, 0);
    while (true) {
      Assignment all;
      Rational coeff{1};
      for (int c = 0; c < ncomp; ++c) {
        const Assignment& a = comp_assign[c][pick[c]];
        coeff *= a.coeff;
        all.nsplit.insert(all.nsplit.end(), a.nsplit.begin(), a.nsplit.end());
        all.land.insert(all.land.end(), a.land.begin(), a.land.end());
        all.bump.insert(all.bump.end(), a.bump.begin(), a.bump.end());
      }

      bool ok = true;
      std::vector<TreePtr> comps(ncomp);
      for (int c = 0; c < ncomp && ok; ++c) {
        comps[c] = build_component(f, children, comp, S, top[c], all);
        if (!comps[c]) ok = false;
      }
      if (ok) {
        std::vector<MultiIndex> node_n(nnodes);
        std::vector<Degree> node_o(nnodes, Degree{});
        for (int v : uncovered) {
          node_n[image[v]] = f.vn[v];
          node_o[image[v]] = f.vo[v];
        }
        for (int v = 0; v < V; ++v)
          if (comp[v] >= 0) node_n[comp[v]] = node_n[comp[v]] + (f.vn[v] - lookup_sum(all.nsplit, v));
        if (extended)
          for (int c = 0; c < ncomp; ++c) node_o[c] = deg_plus(*comps[c]);
        TreePtr right = build_right(f, node_edges, image, all, node_n, node_o, image[0]);
        if (right) {
          Forest left;
          left.items = comps;
          std::sort(left.items.begin(), left.items.end(), TreeLess{});
          out.push_back(MinusTerm{std::move(left), right, coeff});
        }
      }

      int c = 0;
      while (c < ncomp && ++pick[c] == comp_assign[c].size()) pick[c++] = 0;
      if (c == ncomp) break;
    }
  }
  return out;
}

std::string describe_mismatch(const std::string& what, const TreePtr& t) {
  return what + " fails on " + tree_to_string(t);
}

}  // namespace

PlusTensor coproduct_plus(const TreePtr& t, PlusTarget target) {
  PlusTensor raw = cp_full(t);
  if (target == PlusTarget::Tree) return raw;
  PlusTensor out;
  for (const auto& [ab, c] : raw.terms)
    if (plus_factors_ok(*ab.first)) out.add(ab, c);
  return out;
}

MinusTensor coproduct_minus(const TreePtr& t, MinusTarget target, bool extended,
                            bool reduce_right) {
  MinusTensor out;
  if (target == MinusTarget::Tree) {
    for (const MinusTerm& term : minus_terms(t, extended))
      out.add({term.left, term.right}, term.coeff);
    return out;
  }
  // Positive side: extraction must leave the root untouched -- covering it
  // would move a factor's own top edge into the forest slot, producing terms
  // the recentring side of the compatibility laws can never match. Boundary
  // derivatives on the top edges survive in the bookkeeping.
  for (const MinusTerm& term : minus_terms(t, extended, /*keep_root_free=*/true)) {
    if (reduce_right && !plus_factors_ok(*term.right)) continue;
    out.add({term.left, term.right}, term.coeff);
  }
  return out;
}

MinusMinusTensor coproduct_minus_hopf(const Forest& f, bool extended) {
  MinusMinusTensor acc;
  acc.add({forest_unit(), forest_unit()}, Rational(1));
  for (const TreePtr& tree : f.items) {
    MinusMinusTensor part;
    for (const MinusTerm& term : minus_terms(tree, extended)) {
      Forest right;
      const Tree& r = *term.right;
      if (r.edges == 0) {
        // a fully contracted component: X^n dies in the quotient, the bare
        // vertex (whatever its o marker) is the unit
        if (!r.n.is_zero()) continue;
      } else {
        if (!deg_minus(r).negative()) continue;
        right = forest_of(term.right);
      }
      part.add({term.left, right}, term.coeff);
    }
    MinusMinusTensor next;
    for (const auto& [ka, ca] : acc.terms)
      for (const auto& [kb, cb] : part.terms)
        next.add({forest_mul(ka.first, kb.first), forest_mul(ka.second, kb.second)}, ca * cb);
    acc = std::move(next);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Antipodes
// ---------------------------------------------------------------------------

TreeElem antipode_plus(const TreePtr& monomial) {
  ElemMemo memo;
  return ap_monomial(monomial, false, memo);
}

TreeElem twisted_antipode_plus(const TreePtr& monomial) {
  ElemMemo memo;
  return ap_monomial(monomial, true, memo);
}

namespace {

using MinusMemo = std::map<TreePtr, MinusElem, TreeLess>;

MinusElem am_forest(const Forest& f, bool twisted, bool extended, MinusMemo& memo);

MinusElem am_tree(const TreePtr& gen, bool twisted, bool extended, MinusMemo& memo) {
  auto it = memo.find(gen);
  if (it != memo.end()) return it->second;
  MinusElem out;
  const MinusMinusTensor dp = coproduct_minus_hopf(forest_of(gen), extended);
  for (const auto& [ab, c] : dp.terms) {
    if (ab.first.is_unit()) continue;  // the 1 ox tau term carries the recursion
    const MinusElem rec = am_forest(ab.second, twisted, extended, memo);
    for (const auto& [m, cm] : rec.terms) {
      const Forest prod = forest_mul(ab.first, m);
      if (twisted && !forest_deg_minus(prod).negative()) continue;
      out.add(prod, -(c * cm));
    }
  }
  memo.emplace(gen, out);
  return out;
}

MinusElem am_forest(const Forest& f, bool twisted, bool extended, MinusMemo& memo) {
  MinusElem acc;
  acc.add(forest_unit(), Rational(1));
  for (const TreePtr& tree : f.items) {
    const MinusElem part = am_tree(tree, twisted, extended, memo);
    MinusElem next;
    for (const auto& [ka, ca] : acc.terms)
      for (const auto& [kb, cb] : part.terms) next.add(forest_mul(ka, kb), ca * cb);
    acc = std::move(next);
  }
  return acc;
}

}  // namespace

MinusElem antipode_minus(const Forest& f, bool extended) {
  MinusMemo memo;
  return am_forest(f, false, extended, memo);
}

MinusElem twisted_antipode_minus(const Forest& f, bool extended) {
  MinusMemo memo;
  return am_forest(f, true, extended, memo);
}

// ---------------------------------------------------------------------------
// Characters, convolution, actions
// ---------------------------------------------------------------------------

namespace {
template <class V>
V scalar_cast(const Rational& r);
template <>
Rational scalar_cast<Rational>(const Rational& r) {
  return r;
}
template <>
double scalar_cast<double>(const Rational& r) {
  return to_double(r);
}
template <class V>
bool scalar_zero(const V& v) {
  return v == V(0);
}
}  // namespace

template <class V>
V char_plus_eval(const TreeFn<V>& g, const TreePtr& monomial) {
  V out = V(1);
  const Tree& t = *monomial;
  for (long long i = 0; i < t.n.kt; ++i) out = out * g(xpow({1, 0}));
  for (long long i = 0; i < t.n.kx; ++i) out = out * g(xpow({0, 1}));
  for (const Edge& e : t.kids) {
    if (e.noise > 0) throw std::logic_error("noise factor in a positive monomial");
    auto f = integ(e.k, e.sub);
    if (!f) throw std::logic_error("collapsed factor in a positive monomial");
    out = out * g(*f);
  }
  return out;
}

template <class V>
V char_minus_eval(const TreeFn<V>& g, const Forest& f) {
  V out = V(1);
  for (const TreePtr& t : f.items) out = out * g(t);
  return out;
}

template <class V>
V char_plus_convolve(const TreeFn<V>& f, const TreeFn<V>& g, const TreePtr& u) {
  V out = V(0);
  for (const auto& [ab, c] : coproduct_plus(u, PlusTarget::Plus).terms)
    out = out + scalar_cast<V>(c) * char_plus_eval(f, ab.first) * char_plus_eval(g, ab.second);
  return out;
}

template <class V>
V char_plus_inverse(const TreeFn<V>& f, const TreePtr& u) {
  V out = V(0);
  for (const auto& [m, c] : antipode_plus(u).terms)
    out = out + scalar_cast<V>(c) * char_plus_eval(f, m);
  return out;
}

template <class V>
V char_minus_convolve(const TreeFn<V>& f, const TreeFn<V>& g, const Forest& u, bool extended) {
  V out = V(0);
  for (const auto& [ab, c] : coproduct_minus_hopf(u, extended).terms)
    out = out + scalar_cast<V>(c) * char_minus_eval(f, ab.first) * char_minus_eval(g, ab.second);
  return out;
}

template <class V>
V char_minus_inverse(const TreeFn<V>& f, const Forest& u, bool extended) {
  V out = V(0);
  for (const auto& [m, c] : antipode_minus(u, extended).terms)
    out = out + scalar_cast<V>(c) * char_minus_eval(f, m);
  return out;
}

template <class V>
ValComb<V> action_gamma(const TreeFn<V>& g, const TreePtr& t) {
  ValComb<V> out;
  for (const auto& [ab, c] : coproduct_plus(t, PlusTarget::Tree).terms) {
    const V v = scalar_cast<V>(c) * char_plus_eval(g, ab.second);
    if (scalar_zero(v)) continue;
    auto [it, fresh] = out.emplace(ab.first, v);
    if (!fresh) {
      it->second = it->second + v;
      if (scalar_zero(it->second)) out.erase(it);
    }
  }
  return out;
}

template <class V>
ValComb<V> action_renorm(const TreeFn<V>& g, const TreePtr& t, bool extended) {
  ValComb<V> out;
  for (const auto& [ab, c] : coproduct_minus(t, MinusTarget::Tree, extended).terms) {
    const V v = scalar_cast<V>(c) * char_minus_eval(g, ab.first);
    if (scalar_zero(v)) continue;
    auto [it, fresh] = out.emplace(ab.second, v);
    if (!fresh) {
      it->second = it->second + v;
      if (scalar_zero(it->second)) out.erase(it);
    }
  }
  return out;
}

template Rational char_plus_eval<Rational>(const TreeFn<Rational>&, const TreePtr&);
template double char_plus_eval<double>(const TreeFn<double>&, const TreePtr&);
template Rational char_minus_eval<Rational>(const TreeFn<Rational>&, const Forest&);
template double char_minus_eval<double>(const TreeFn<double>&, const Forest&);
template Rational char_plus_convolve<Rational>(const TreeFn<Rational>&, const TreeFn<Rational>&,
                                               const TreePtr&);
template double char_plus_convolve<double>(const TreeFn<double>&, const TreeFn<double>&,
                                           const TreePtr&);
template Rational char_plus_inverse<Rational>(const TreeFn<Rational>&, const TreePtr&);
template double char_plus_inverse<double>(const TreeFn<double>&, const TreePtr&);
template Rational char_minus_convolve<Rational>(const TreeFn<Rational>&, const TreeFn<Rational>&,
                                                const Forest&, bool);
template double char_minus_convolve<double>(const TreeFn<double>&, const TreeFn<double>&,
                                            const Forest&, bool);
template Rational char_minus_inverse<Rational>(const TreeFn<Rational>&, const Forest&, bool);
template double char_minus_inverse<double>(const TreeFn<double>&, const Forest&, bool);
template ValComb<Rational> action_gamma<Rational>(const TreeFn<Rational>&, const TreePtr&);
template ValComb<double> action_gamma<double>(const TreeFn<double>&, const TreePtr&);
template ValComb<Rational> action_renorm<Rational>(const TreeFn<Rational>&, const TreePtr&, bool);
template ValComb<double> action_renorm<double>(const TreeFn<double>&, const TreePtr&, bool);

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

std::optional<TreePtr> project_ex(const TreePtr& t) {
  std::vector<Edge> kids;
  for (const Edge& e : t->kids) {
    if (e.noise > 0) {
      kids.push_back(e);
      continue;
    }
    auto s = project_ex(e.sub);
    if (!s) return std::nullopt;
    if ((*s)->edges == 0) return std::nullopt;  // I_k(X^n) = 0 once o is gone
    kids.push_back(Edge{0, e.k, *s});
  }
  return make_tree(t->n, Degree{}, kids);
}

std::optional<Forest> project_ex_minus(const Forest& f) {
  Forest out;
  for (const TreePtr& t : f.items) {
    auto p = project_ex(t);
    if (!p) return std::nullopt;
    out = forest_mul(out, forest_of(*p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cointeraction checks
// ---------------------------------------------------------------------------

namespace {

using Triple = std::tuple<Forest, TreePtr, TreePtr>;
struct TripleLess {
  bool operator()(const Triple& a, const Triple& b) const {
    const int c = forest_cmp(std::get<0>(a), std::get<0>(b));
    if (c != 0) return c < 0;
    const int d = tree_cmp(*std::get<1>(a), *std::get<1>(b));
    if (d != 0) return d < 0;
    return tree_cmp(*std::get<2>(a), *std::get<2>(b)) < 0;
  }
};
using TripleTensor = LinComb<Triple, TripleLess>;

std::string triple_str(const Triple& k) {
  return forest_to_string(std::get<0>(k)) + " (x) " + tree_to_string(std::get<1>(k)) + " (x) " +
         tree_to_string(std::get<2>(k));
}

}  // namespace

std::optional<std::string> cointeraction_tree(const TreePtr& t, bool extended) {
  TripleTensor lhs, rhs;
  for (const auto& [ab, c] : coproduct_plus(t, PlusTarget::Tree).terms) {
    const MinusTensor da = coproduct_minus(ab.first, MinusTarget::Tree, extended);
    const MinusTensor db = coproduct_minus(ab.second, MinusTarget::Plus, extended);
    for (const auto& [a12, c1] : da.terms)
      for (const auto& [b12, c2] : db.terms)
        lhs.add({forest_mul(a12.first, b12.first), a12.second, b12.second}, c * c1 * c2);
  }
  for (const auto& [cd, c] : coproduct_minus(t, MinusTarget::Tree, extended).terms)
    for (const auto& [de, e] : coproduct_plus(cd.second, PlusTarget::Tree).terms)
      rhs.add({cd.first, de.first, de.second}, c * e);
  if (lhs == rhs) return std::nullopt;
  // report the first key whose coefficients differ
  for (const auto& [k, c] : lhs.terms) {
    auto it = rhs.terms.find(k);
    if (it == rhs.terms.end() || it->second != c)
      return "model cointeraction fails on " + tree_to_string(t) + " at term " + triple_str(k);
  }
  for (const auto& [k, c] : rhs.terms)
    if (lhs.terms.find(k) == lhs.terms.end())
      return "model cointeraction fails on " + tree_to_string(t) + " at term " + triple_str(k);
  return "model cointeraction fails on " + tree_to_string(t);
}

std::optional<std::string> cointeraction_plus(const TreePtr& u, bool extended) {
  MinusTensor lhs, rhs;
  for (const auto& [m, cm] : twisted_antipode_plus(u).terms)
    for (const auto& [lr, c] : coproduct_minus(m, MinusTarget::Plus, extended).terms)
      lhs.add(lr, cm * c);
  for (const auto& [lb, c] : coproduct_minus(u, MinusTarget::Plus, extended).terms)
    for (const auto& [m2, c2] : twisted_antipode_plus(lb.second).terms) {
      if (!plus_factors_ok(*m2)) continue;  // compare in the reduced algebra
      rhs.add({lb.first, m2}, c * c2);
    }
  if (lhs == rhs) return std::nullopt;
  for (const auto& [k, c] : lhs.terms) {
    auto it = rhs.terms.find(k);
    if (it == rhs.terms.end() || it->second != c)
      return "positive-side cointeraction fails on " + tree_to_string(u) + " at term " +
             forest_to_string(k.first) + " (x) " + tree_to_string(k.second);
  }
  return "positive-side cointeraction fails on " + tree_to_string(u);
}

// ---------------------------------------------------------------------------
// Law suite
// ---------------------------------------------------------------------------

namespace {

// deterministic small-rational character for the group-law tests
Rational pseudo_value(const TreePtr& t) {
  const std::string s = tree_to_string(t);
  uint64_t h = 1469598103934665603ull;
  for (char ch : s) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
  const long long num = static_cast<long long>(h % 7) - 3;
  const long long den = 1 + static_cast<long long>((h >> 8) % 4);
  return Rational(num, den);
}

using TreeTriple = std::tuple<TreePtr, TreePtr, TreePtr>;
struct TreeTripleLess {
  bool operator()(const TreeTriple& a, const TreeTriple& b) const {
    const int c = tree_cmp(*std::get<0>(a), *std::get<0>(b));
    if (c != 0) return c < 0;
    const int d = tree_cmp(*std::get<1>(a), *std::get<1>(b));
    if (d != 0) return d < 0;
    return tree_cmp(*std::get<2>(a), *std::get<2>(b)) < 0;
  }
};

using FFFTriple = std::tuple<Forest, Forest, Forest>;
struct FFFTripleLess {
  bool operator()(const FFFTriple& a, const FFFTriple& b) const {
    const int c = forest_cmp(std::get<0>(a), std::get<0>(b));
    if (c != 0) return c < 0;
    const int d = forest_cmp(std::get<1>(a), std::get<1>(b));
    if (d != 0) return d < 0;
    return forest_cmp(std::get<2>(a), std::get<2>(b)) < 0;
  }
};

using FFTriple = std::tuple<Forest, Forest, TreePtr>;
struct FFTripleLess {
  bool operator()(const FFTriple& a, const FFTriple& b) const {
    const int c = forest_cmp(std::get<0>(a), std::get<0>(b));
    if (c != 0) return c < 0;
    const int d = forest_cmp(std::get<1>(a), std::get<1>(b));
    if (d != 0) return d < 0;
    return tree_cmp(*std::get<2>(a), *std::get<2>(b)) < 0;
  }
};

// std::map::operator== would compare TreePtr keys by pointer; compare
// structurally instead.
bool valcomb_eq(const ValComb<Rational>& a, const ValComb<Rational>& b) {
  if (a.size() != b.size()) return false;
  auto it = b.begin();
  for (const auto& [t, v] : a) {
    if (!tree_eq(t, it->first) || v != it->second) return false;
    ++it;
  }
  return true;
}

}  // namespace

std::vector<LawResult> hopf_check_suite(const std::vector<TreePtr>& basis, Degree cutoff,
                                        bool extended) {
  std::vector<TreePtr> work;
  for (const TreePtr& t : basis)
    if (deg_minus(*t) <= cutoff) work.push_back(t);

  std::vector<LawResult> results;
  results.reserve(16);
  auto law = [&results](const std::string& name) -> LawResult& {
    results.push_back(LawResult{name, true, ""});
    return results.back();
  };
  auto fail = [](LawResult& r, const std::string& w) {
    if (r.pass) {
      r.pass = false;
      r.witness = w;
    }
  };

  // --- recentring coproduct: coassociativity ---
  {
    LawResult& r = law("coassoc-plus");
    for (const TreePtr& t : work) {
      LinComb<TreeTriple, TreeTripleLess> lhs, rhs;
      const PlusTensor dp = coproduct_plus(t, PlusTarget::Tree);
      for (const auto& [ab, c] : dp.terms) {
        for (const auto& [a12, c1] : coproduct_plus(ab.first, PlusTarget::Tree).terms)
          lhs.add({a12.first, a12.second, ab.second}, c * c1);
        for (const auto& [b12, c2] : coproduct_plus(ab.second, PlusTarget::Plus).terms)
          rhs.add({ab.first, b12.first, b12.second}, c * c2);
      }
      if (!(lhs == rhs)) {
        fail(r, describe_mismatch("coassociativity of the recentring coproduct", t));
        break;
      }
    }
  }

  // --- extraction coproduct: comodule coassociativity ---
  {
    LawResult& r = law("coassoc-minus");
    for (const TreePtr& t : work) {
      LinComb<FFTriple, FFTripleLess> lhs, rhs;
      const MinusTensor dm = coproduct_minus(t, MinusTarget::Tree, extended);
      for (const auto& [ab, c] : dm.terms) {
        for (const auto& [a12, c1] : coproduct_minus_hopf(ab.first, extended).terms)
          lhs.add({a12.first, a12.second, ab.second}, c * c1);
        for (const auto& [b12, c2] : coproduct_minus(ab.second, MinusTarget::Tree, extended).terms)
          rhs.add({ab.first, b12.first, b12.second}, c * c2);
      }
      if (!(lhs == rhs)) {
        fail(r, describe_mismatch("comodule coassociativity of the extraction coproduct", t));
        break;
      }
    }
  }

  // --- extraction coproduct: coassociativity at the algebra level ---
  {
    LawResult& r = law("coassoc-minus-hopf");
    for (const TreePtr& t : work) {
      if (!deg_minus(*t).negative()) continue;
      const Forest f = forest_of(t);
      LinComb<FFFTriple, FFFTripleLess> lhs, rhs;
      const MinusMinusTensor dm = coproduct_minus_hopf(f, extended);
      for (const auto& [ab, c] : dm.terms) {
        for (const auto& [a12, c1] : coproduct_minus_hopf(ab.first, extended).terms)
          lhs.add({a12.first, a12.second, ab.second}, c * c1);
        for (const auto& [b12, c2] : coproduct_minus_hopf(ab.second, extended).terms)
          rhs.add({ab.first, b12.first, b12.second}, c * c2);
      }
      if (!(lhs == rhs)) {
        fail(r, describe_mismatch("coassociativity of the extraction algebra", t));
        break;
      }
    }
  }

  // --- counit laws ---
  {
    LawResult& r = law("counit-plus");
    for (const TreePtr& t : work) {
      TreeElem acc;
      for (const auto& [ab, c] : coproduct_plus(t, PlusTarget::Tree).terms)
        if (is_one(ab.second)) acc.add(ab.first, c);
      TreeElem expect;
      expect.add(t, Rational(1));
      if (!(acc == expect)) {
        fail(r, describe_mismatch("counit law of the recentring comodule", t));
        break;
      }
    }
  }
  {
    LawResult& r = law("counit-plus-hopf");
    for (const TreePtr& t : work) {
      for (const MultiIndex k : {MultiIndex{0, 0}, MultiIndex{0, 1}}) {
        auto gen = integ(k, t);
        if (!gen || !(deg_plus(**gen)).positive()) continue;
        TreeElem left, right, expect;
        expect.add(*gen, Rational(1));
        for (const auto& [ab, c] : coproduct_plus(*gen, PlusTarget::Plus).terms) {
          if (is_one(ab.first)) left.add(ab.second, c);
          if (is_one(ab.second)) right.add(ab.first, c);
        }
        if (!(left == expect) || !(right == expect)) {
          fail(r, describe_mismatch("two-sided counit law of the recentring algebra", *gen));
          break;
        }
      }
      if (!r.pass) break;
    }
  }
  {
    LawResult& r = law("counit-minus");
    for (const TreePtr& t : work) {
      TreeElem acc;
      for (const auto& [ab, c] : coproduct_minus(t, MinusTarget::Tree, extended).terms)
        if (ab.first.is_unit()) acc.add(ab.second, c);
      TreeElem expect;
      expect.add(t, Rational(1));
      if (!(acc == expect)) {
        fail(r, describe_mismatch("counit law of the extraction comodule", t));
        break;
      }
    }
  }
  {
    LawResult& r = law("counit-minus-hopf");
    for (const TreePtr& t : work) {
      if (!deg_minus(*t).negative()) continue;
      const Forest f = forest_of(t);
      MinusElem left, right, expect;
      expect.add(f, Rational(1));
      for (const auto& [ab, c] : coproduct_minus_hopf(f, extended).terms) {
        if (ab.first.is_unit()) left.add(ab.second, c);
        if (ab.second.is_unit()) right.add(ab.first, c);
      }
      if (!(left == expect) || !(right == expect)) {
        fail(r, describe_mismatch("two-sided counit law of the extraction algebra", t));
        break;
      }
    }
  }

  // --- degree bookkeeping ---
  {
    LawResult& r = law("degree-plus");
    for (const TreePtr& t : work) {
      const Degree d = deg_plus(*t);
      for (const auto& [ab, c] : coproduct_plus(t, PlusTarget::Tree).terms)
        if (!(deg_plus(*ab.first) + deg_plus(*ab.second) == d)) {
          fail(r, describe_mismatch("additivity of the graded degree", t));
          break;
        }
      if (!r.pass) break;
    }
  }
  {
    LawResult& r = law("degree-minus");
    for (const TreePtr& t : work) {
      const Degree dm = deg_minus(*t);
      const Degree dp = deg_plus(*t);
      for (const auto& [ab, c] : coproduct_minus(t, MinusTarget::Tree, extended).terms) {
        if (!(forest_deg_minus(ab.first) + deg_minus(*ab.second) == dm)) {
          fail(r, describe_mismatch("plain degree bookkeeping of the extraction coproduct", t));
          break;
        }
        if (extended && !(deg_plus(*ab.second) == dp)) {
          fail(r, describe_mismatch("graded degree preservation of the contracted leg", t));
          break;
        }
      }
      if (!r.pass) break;
    }
  }

  // --- triangularity ---
  {
    LawResult& r = law("triangular-plus");
    for (const TreePtr& t : work) {
      const Degree d = deg_plus(*t);
      for (const auto& [ab, c] : coproduct_plus(t, PlusTarget::Tree).terms) {
        const bool unit_leg = is_one(ab.second);
        if (unit_leg && !tree_eq(ab.first, t)) {
          fail(r, describe_mismatch("identity term of the recentring coproduct", t));
          break;
        }
        if (!unit_leg && !(deg_plus(*ab.first) < d)) {
          fail(r, describe_mismatch("strict triangularity of recentring", t));
          break;
        }
      }
      if (!r.pass) break;
    }
  }
  {
    // Triangularity of the extraction coproduct in the o-blind grading: every
    // extracted component is strictly negative (landings included), so the
    // contracted leg sits strictly above the input. The o-blind degree is the
    // right notion in both modes: extended contraction markers record the
    // extracted degree on the vertex and would double-count under the graded
    // degree (which is conserved instead; see degree-minus).
    LawResult& r = law("triangular-minus");
    for (const TreePtr& t : work) {
      const Degree d = deg_minus(*t);
      for (const auto& [ab, c] : coproduct_minus(t, MinusTarget::Tree, extended).terms) {
        if (ab.first.is_unit()) {
          if (!tree_eq(ab.second, t)) {
            fail(r, describe_mismatch("identity term of the extraction coproduct", t));
            break;
          }
        } else if (!(deg_minus(*ab.second) > d)) {
          fail(r, describe_mismatch("renormalisation raises degrees", t));
          break;
        }
      }
      if (!r.pass) break;
    }
  }

  // --- antipode laws ---
  {
    LawResult& r = law("antipode-plus");
    for (const TreePtr& t : work) {
      for (const MultiIndex k : {MultiIndex{0, 0}, MultiIndex{0, 1}}) {
        auto gen = integ(k, t);
        if (!gen || !(deg_plus(**gen)).positive()) continue;
        TreeElem left, right;
        for (const auto& [ab, c] : coproduct_plus(*gen, PlusTarget::Plus).terms) {
          for (const auto& [m, cm] : antipode_plus(ab.first).terms)
            left.add(mul(m, ab.second), c * cm);
          for (const auto& [m, cm] : antipode_plus(ab.second).terms)
            right.add(mul(ab.first, m), c * cm);
        }
        if (!left.is_zero() || !right.is_zero()) {
          fail(r, describe_mismatch("antipode law of the recentring algebra", *gen));
          break;
        }
      }
      if (!r.pass) break;
    }
  }
  {
    LawResult& r = law("antipode-minus");
    for (const TreePtr& t : work) {
      if (!deg_minus(*t).negative()) continue;
      const Forest f = forest_of(t);
      MinusElem left, right;
      for (const auto& [ab, c] : coproduct_minus_hopf(f, extended).terms) {
        for (const auto& [m, cm] : antipode_minus(ab.first, extended).terms)
          left.add(forest_mul(m, ab.second), c * cm);
        for (const auto& [m, cm] : antipode_minus(ab.second, extended).terms)
          right.add(forest_mul(ab.first, m), c * cm);
      }
      if (!left.is_zero() || !right.is_zero()) {
        fail(r, describe_mismatch("antipode law of the extraction algebra", t));
        break;
      }
    }
  }

  // --- character group laws ---
  {
    LawResult& r = law("char-group-minus");
    const TreeFn<Rational> g = pseudo_value;
    for (const TreePtr& t : work) {
      if (!deg_minus(*t).negative()) continue;
      const Forest f = forest_of(t);
      const TreeFn<Rational> ginv = [&](const TreePtr& x) {
        return char_minus_inverse<Rational>(g, forest_of(x), extended);
      };
      const Rational conv = char_minus_convolve<Rational>(g, ginv, f, extended);
      const Rational vonc = char_minus_convolve<Rational>(ginv, g, f, extended);
      if (!rat_is_zero(conv) || !rat_is_zero(vonc)) {
        fail(r, describe_mismatch("character inversion in the extraction group", t));
        break;
      }
    }
  }
  {
    LawResult& r = law("char-group-plus");
    const TreeFn<Rational> g = pseudo_value;
    for (const TreePtr& t : work) {
      auto gen = integ(MultiIndex{0, 0}, t);
      if (!gen || !deg_plus(**gen).positive()) continue;
      const TreeFn<Rational> ginv = [&](const TreePtr& x) {
        return char_plus_inverse<Rational>(g, x);
      };
      const Rational conv = char_plus_convolve<Rational>(g, ginv, *gen);
      const Rational vonc = char_plus_convolve<Rational>(ginv, g, *gen);
      if (!rat_is_zero(conv) || !rat_is_zero(vonc)) {
        fail(r, describe_mismatch("character inversion in the recentring group", *gen));
        break;
      }
    }
  }

  // --- cointeraction and projection compatibility (extended structure) ---
  if (extended) {
    {
      LawResult& r = law("cointeraction-model");
      for (const TreePtr& t : work) {
        if (auto w = cointeraction_tree(t, true)) {
          fail(r, *w);
          break;
        }
      }
    }
    {
      LawResult& r = law("cointeraction-positive");
      for (const TreePtr& t : work) {
        for (const MultiIndex k : {MultiIndex{0, 0}, MultiIndex{0, 1}}) {
          auto gen = integ(k, t);
          if (!gen || !deg_plus(**gen).positive()) continue;
          if (auto w = cointeraction_plus(*gen, true)) {
            fail(r, *w);
            break;
          }
        }
        if (!r.pass) break;
      }
    }
    {
      LawResult& r = law("projection-compat");
      const TreeFn<Rational> g = pseudo_value;
      const TreeFn<Rational> gex = [&](const TreePtr& x) {
        auto p = project_ex(x);
        if (!p) return Rational(0);
        if ((*p)->edges == 0 && (*p)->n.is_zero()) return Rational(1);
        return pseudo_value(*p);
      };
      for (const TreePtr& t : work) {
        const ValComb<Rational> ex = action_renorm<Rational>(gex, t, true);
        ValComb<Rational> projected;
        for (const auto& [tree, v] : ex) {
          auto p = project_ex(tree);
          if (!p) continue;
          projected[*p] += v;
          if (rat_is_zero(projected[*p])) projected.erase(*p);
        }
        const ValComb<Rational> plain = action_renorm<Rational>(g, t, false);
        if (!valcomb_eq(projected, plain)) {
          fail(r, describe_mismatch("projection compatibility of renormalisation", t));
          break;
        }
      }
    }
  }

  return results;
}

// ---------------------------------------------------------------------------
// Sector closure of the generated basis under recentring
// ---------------------------------------------------------------------------

ClosureReport sector_closure_check(const StructureIndex& idx) {
  ClosureReport rep;
  const Degree lim = idx.gamma_max - two();
  for (const auto& entry : idx.basis) {
    if (!(entry.deg <= lim)) continue;
    ++rep.checked;
    for (const auto& [ab, c] : coproduct_plus(entry.t, PlusTarget::Tree).terms) {
      if (is_one(ab.first)) continue;
      if (idx.find(ab.first) < 0) rep.violations.push_back({entry.t, ab.first});
    }
  }
  return rep;
}

}  // namespace loopren
