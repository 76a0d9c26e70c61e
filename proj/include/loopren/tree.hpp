#pragma once
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "loopren/degree.hpp"
#include "loopren/multiindex.hpp"

namespace loopren {

struct Tree;
using TreePtr = std::shared_ptr<const Tree>;

// An edge together with the subtree it leads into. noise == 0 means a kernel
// (integration) edge carrying a derivative multi-index k; noise == i > 0 means
// an occurrence of the i-th driving noise (k stays zero on those).
struct Edge {
  int noise = 0;
  MultiIndex k;
  TreePtr sub;
};

// Rooted decorated tree. `n` is the polynomial decoration of a vertex, `o` an
// extra degree-valued decoration used by the extended (renormalisation-aware)
// recentring structure; it is identically zero in plain mode. Children are
// kept sorted so equal trees have identical representations.
struct Tree {
  MultiIndex n;
  Degree o;
  std::vector<Edge> kids;
  int edges = 0;   // cached: total number of edges
  int nodes = 1;   // cached: total number of vertices
};

int tree_cmp(const Tree& a, const Tree& b);
int edge_cmp(const Edge& a, const Edge& b);
inline bool tree_eq(const TreePtr& a, const TreePtr& b) { return tree_cmp(*a, *b) == 0; }

struct TreeLess {
  bool operator()(const TreePtr& a, const TreePtr& b) const { return tree_cmp(*a, *b) < 0; }
};

// ---- canonicalising builders ----
TreePtr make_tree(MultiIndex n, Degree o, std::vector<Edge> kids);
TreePtr one();                // bare vertex == X^0
TreePtr xpow(MultiIndex k);   // X^k
TreePtr xi(int i);            // i-th noise symbol, i >= 1
// Abstract integration I_k(t). Returns nullopt when the result collapses to
// zero: the argument has no edges and trivial o-decoration (a bare monomial).
std::optional<TreePtr> integ(MultiIndex k, const TreePtr& t);
TreePtr mul(const TreePtr& a, const TreePtr& b);        // join at the root
TreePtr with_extra_n(const TreePtr& t, MultiIndex add); // multiply by X^add
TreePtr with_root_o(const TreePtr& t, Degree o);

bool is_one(const TreePtr& t);
bool is_bare_monomial(const Tree& t);  // no edges and o == 0 (X^n, possibly n=0)

// Degrees. deg_minus ignores the o decorations; deg_plus adds them on top.
// Kernel edges count 2 - |k|, noise edges -3/2 - kappa, X^n adds |n|.
Degree deg_minus(const Tree& t);
Degree deg_plus(const Tree& t);
Degree edge_degree(const Edge& e);  // type degree minus derivative weight

// A tree is a valid positive-structure monomial when all root children are
// kernel edges; the root children are the I_k(...) generator factors and the
// root decoration supplies X factors. `tplus_factors_positive` additionally
// demands strictly positive deg_plus of every I-factor (the quotient that
// makes the positive algebra a Hopf algebra drops everything else).
bool tplus_shape(const Tree& t);
bool tplus_factors_positive(const Tree& t);

// ---- text form, shared with the CLI ----
std::string tree_to_string(const Tree& t);
inline std::string tree_to_string(const TreePtr& t) { return tree_to_string(*t); }
// Parse the same grammar. On syntax error returns nullopt and sets *err; a
// successfully parsed expression that collapses to zero returns nullopt with
// *err left empty.
std::optional<TreePtr> parse_tree(const std::string& s, std::string* err = nullptr);

}  // namespace loopren
