#include "loopren/structure.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace loopren {

namespace {

using TreeSet = std::set<TreePtr, TreeLess>;

int noise_edge_count(const Tree& t) {
  int c = 0;
  for (const auto& e : t.kids) {
    if (e.noise > 0) ++c;
    c += noise_edge_count(*e.sub);
  }
  return c;
}

long long total_space_derivs(const Tree& t) {
  long long c = t.n.kx;
  for (const auto& e : t.kids) {
    c += e.k.kx;
    c += total_space_derivs(*e.sub);
  }
  return c;
}

TreePtr erase_noise_indices(const TreePtr& t) {
  std::vector<Edge> kids;
  kids.reserve(t->kids.size());
  for (const auto& e : t->kids)
    kids.push_back(Edge{e.noise > 0 ? 1 : 0, e.k, erase_noise_indices(e.sub)});
  return make_tree(t->n, t->o, std::move(kids));
}

struct Gen {
  int m;
  Degree gamma;
  bool closure;
  std::size_t budget;
  TreeSet W, U, Up;

  // Factors of the solution/gradient sectors may individually exceed the W
  // cutoff when paired with negative companions: a U factor can ride with a
  // noise (-3/2-kappa), a gradient factor with another gradient factor
  // (-1/2-kappa). Keep them up to these internal cutoffs.
  Degree gamma_u() const { return gamma + Degree{Rational(3, 2), 1}; }
  Degree gamma_up() const { return gamma + Degree{Rational(1, 2), 1}; }

  bool add(TreeSet& s, const TreePtr& t) {
    auto [it, fresh] = s.insert(t);
    (void)it;
    if (fresh && W.size() + U.size() + Up.size() > budget)
      throw std::runtime_error("structure generation exceeds element budget");
    return fresh;
  }

  bool within(const TreePtr& t) const { return deg_minus(*t) <= gamma; }

  // multiply `cur` by U-elements (indices >= i in `us`, ascending degree),
  // adding every product within the cutoff to W
  bool products_from(const TreePtr& cur, const std::vector<TreePtr>& us, size_t i) {
    bool changed = false;
    for (size_t j = i; j < us.size(); ++j) {
      TreePtr t = mul(cur, us[j]);
      if (!within(t)) {
        // us is sorted by ascending degree and all degrees are positive, so
        // every later factor overshoots as well
        break;
      }
      changed |= add(W, t);
      changed |= products_from(t, us, j);
    }
    return changed;
  }

  StructureIndex run() {
    for (int i = 1; i <= m; ++i)
      if (within(xi(i))) add(W, xi(i));
    // polynomial seeds X^k, |k| <= gamma
    for (long long kt = 0; Degree{Rational(2 * kt), 0} <= gamma; ++kt)
      for (long long kx = 0; Degree{Rational(2 * kt + kx), 0} <= gamma; ++kx)
        add(W, xpow({kt, kx}));

    bool changed = true;
    while (changed) {
      changed = false;

      // integrate W into the solution and gradient sectors
      std::vector<TreePtr> wsnap(W.begin(), W.end());
      for (const auto& t : wsnap) {
        if (auto it = integ({0, 0}, t); it && deg_minus(**it) <= gamma_u()) changed |= add(U, *it);
        if (auto it = integ({0, 1}, t); it && deg_minus(**it) <= gamma_up())
          changed |= add(Up, *it);
      }

      // optional X^k closure of W
      if (closure) {
        for (const auto& t : wsnap) {
          Degree budget = gamma - deg_minus(*t);
          for (long long kt = 0; Degree{Rational(2 * kt), 0} <= budget; ++kt)
            for (long long kx = (kt == 0 ? 1 : 0);
                 Degree{Rational(2 * kt + kx), 0} <= budget; ++kx)
              changed |= add(W, with_extra_n(t, {kt, kx}));
        }
      }

      // products of U-elements with an optional appended factor: nothing, a
      // noise, one gradient factor, or two gradient factors
      std::vector<TreePtr> us(U.begin(), U.end());
      std::stable_sort(us.begin(), us.end(), [](const TreePtr& a, const TreePtr& b) {
        Degree da = deg_minus(*a), db = deg_minus(*b);
        if (da != db) return da < db;
        return tree_cmp(*a, *b) < 0;
      });
      std::vector<TreePtr> ups(Up.begin(), Up.end());
      std::vector<Degree> updeg;
      updeg.reserve(ups.size());
      for (const auto& s : ups) updeg.push_back(deg_minus(*s));

      // a base over the cutoff can't come back down (all U degrees are
      // positive), so only within-cutoff tails are explored at all
      auto explore = [&](const TreePtr& base) {
        if (!within(base)) return;
        if (!is_one(base)) changed |= add(W, base);
        changed |= products_from(base, us, 0);
      };
      explore(one());
      for (int j = 1; j <= m; ++j) explore(xi(j));
      for (size_t a = 0; a < ups.size(); ++a) {
        explore(ups[a]);
        for (size_t b = a; b < ups.size(); ++b) {
          if (updeg[a] + updeg[b] <= gamma) explore(mul(ups[a], ups[b]));
        }
      }
    }

    StructureIndex idx;
    idx.m = m;
    idx.gamma_max = gamma;
    idx.xk_closure = closure;
    for (const auto& t : W) {
      StructureIndex::Entry e;
      e.t = t;
      e.deg = deg_minus(*t);
      e.in_W = true;
      e.in_U = U.count(t) > 0;
      e.in_Up = Up.count(t) > 0;
      idx.basis.push_back(e);
    }
    std::stable_sort(idx.basis.begin(), idx.basis.end(),
                     [](const StructureIndex::Entry& a, const StructureIndex::Entry& b) {
                       if (a.deg != b.deg) return a.deg < b.deg;
                       return tree_cmp(*a.t, *b.t) < 0;
                     });
    for (size_t i = 0; i < idx.basis.size(); ++i)
      idx.strata[idx.basis[i].deg].push_back((int)i);
    return idx;
  }
};

}  // namespace

StructureIndex generate(int m, Degree gamma_max, bool xk_closure, std::size_t max_elements) {
  if (m < 1) throw std::invalid_argument("noise count must be >= 1");
  Gen g{m, gamma_max, xk_closure, max_elements, {}, {}, {}};
  return g.run();
}

int StructureIndex::find(const TreePtr& t) const {
  auto it = std::lower_bound(basis.begin(), basis.end(), t,
                             [](const Entry& e, const TreePtr& x) {
                               Degree dx = deg_minus(*x);
                               if (e.deg != dx) return e.deg < dx;
                               return tree_cmp(*e.t, *x) < 0;
                             });
  if (it == basis.end() || tree_cmp(*it->t, *t) != 0) return -1;
  return (int)(it - basis.begin());
}

std::vector<CountRow> count_negative(const StructureIndex& idx) {
  auto count = [&](bool b, bool c, bool d) -> long long {
    TreeSet shapes;
    long long n = 0;
    for (const auto& e : idx.basis) {
      if (!e.in_W || !e.deg.negative()) continue;
      if (c && noise_edge_count(*e.t) % 2 != 0) continue;
      if (d && total_space_derivs(*e.t) % 2 != 0) continue;
      if (b) {
        shapes.insert(erase_noise_indices(e.t));
      } else {
        ++n;
      }
    }
    return b ? (long long)shapes.size() : n;
  };
  std::vector<CountRow> rows;
  const bool flags[8][3] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
                            {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  const char* names[8] = {"a", "b", "c", "d", "bc", "bd", "cd", "bcd"};
  for (int i = 0; i < 8; ++i)
    rows.push_back({names[i], count(flags[i][0], flags[i][1], flags[i][2])});
  return rows;
}

std::optional<Degree> parse_degree(const std::string& in) {
  std::string s;
  for (char c : in)
    if (!std::isspace((unsigned char)c)) s += c;
  if (s.empty()) return std::nullopt;
  // strip a trailing "k"/"kappa"
  size_t kpos = s.find('k');
  if (kpos == std::string::npos) {
    auto q = parse_rational(s);
    if (!q) return std::nullopt;
    return Degree{*q, 0};
  }
  std::string after = s.substr(kpos + 1);
  if (!after.empty() && after != "appa") return std::nullopt;
  std::string head = s.substr(0, kpos);
  // split the kappa coefficient off at the last interior sign
  size_t j = std::string::npos;
  for (size_t i = 1; i < head.size(); ++i)
    if (head[i] == '+' || head[i] == '-') j = i;
  std::string qs, ms;
  if (j == std::string::npos) {
    qs = "";
    ms = head;
  } else {
    qs = head.substr(0, j);
    ms = head.substr(j);
  }
  Rational q{0};
  if (!qs.empty()) {
    auto r = parse_rational(qs);
    if (!r) return std::nullopt;
    q = *r;
  }
  long long mval = 1;
  if (ms == "" || ms == "+")
    mval = 1;
  else if (ms == "-")
    mval = -1;
  else {
    try {
      size_t used = 0;
      mval = std::stoll(ms, &used);
      if (used != ms.size()) return std::nullopt;
    } catch (...) {
      return std::nullopt;
    }
  }
  return Degree{q, mval};
}

std::string degree_to_cli_string(const Degree& d) {
  std::string s;
  if (!rat_is_zero(d.q) || d.m == 0) {
    s = std::to_string(d.q.numerator());
    if (d.q.denominator() != 1) s += "/" + std::to_string(d.q.denominator());
  }
  if (d.m != 0) {
    if (d.m > 0 && !s.empty()) s += "+";
    s += std::to_string(d.m) + "k";
  }
  return s;
}

}  // namespace loopren
