#pragma once
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "loopren/forest.hpp"
#include "loopren/lincomb.hpp"
#include "loopren/tree.hpp"

namespace loopren {

// ---------------------------------------------------------------------------
// Element and tensor types. Elements of the positive structure group algebra
// are represented as joined trees: the root decoration carries the polynomial
// part and each root kernel edge is one I_k(...) generator factor. Elements of
// the negative (extraction) algebra are forests, the empty forest being 1.
// ---------------------------------------------------------------------------
using TreeElem = LinComb<TreePtr, TreeLess>;
using MinusElem = LinComb<Forest, ForestLess>;
using PlusTensor = LinComb<std::pair<TreePtr, TreePtr>, PairLess<TreeLess, TreeLess>>;
using MinusTensor = LinComb<std::pair<Forest, TreePtr>, PairLess<ForestLess, TreeLess>>;
using MinusMinusTensor = LinComb<std::pair<Forest, Forest>, PairLess<ForestLess, ForestLess>>;

// ---------------------------------------------------------------------------
// Recentring coproduct.
//
// With target Tree the left leg lives in the model space (no reduction); with
// target Plus the input must be a positive monomial and the left leg is also
// reduced modulo the ideal of non-positively graded I-factors. The right leg
// is always reduced that way. Vertex o-decorations never split: they travel
// with their vertex, so extended inputs are handled by the same recursion.
// ---------------------------------------------------------------------------
enum class PlusTarget { Tree, Plus };
PlusTensor coproduct_plus(const TreePtr& t, PlusTarget target = PlusTarget::Tree);

// ---------------------------------------------------------------------------
// Extraction/contraction coproduct on a single tree. The sum runs over all
// subforests (edge subsets without isolated vertices); each term extracts the
// decorated components on the left (always reduced modulo the ideal of
// non-negative factors, which truncates all sums) and contracts them in the
// right factor. Boundary derivative decorations are enumerated per incidence:
// an edge outside the subforest picks up an independent derivative for each
// of its endpoints covered by the subforest, and the matching polynomial
// decoration lands on that endpoint. Kernel edges only; noise edges admit no
// derivative bump.
//
// target Tree: right leg in the model space (only normalisation I_k(X^n) = 0).
// target Plus: input is a positive monomial; if reduce_right is set the right
//              leg is reduced modulo non-positively graded I-factors.
// `extended` switches on the o-bookkeeping: every contracted component leaves
// behind a vertex whose o-decoration records the full graded degree of the
// extracted component, so the graded degree of the right leg equals that of
// the input.
// ---------------------------------------------------------------------------
enum class MinusTarget { Tree, Plus };
MinusTensor coproduct_minus(const TreePtr& t, MinusTarget target, bool extended,
                            bool reduce_right = true);

// Multiplicative extension to the negative algebra itself: both legs are
// forests and contracted components that become bare vertices are absorbed
// into the unit. Right-leg components of non-negative degree are dropped.
MinusMinusTensor coproduct_minus_hopf(const Forest& f, bool extended);

// ---------------------------------------------------------------------------
// Antipodes. All four are algebra morphisms determined by their values on
// generators; the twisted variants project onto strictly positive (resp.
// strictly negative) total grade inside each recursion step and land in the
// unreduced algebras.
// ---------------------------------------------------------------------------
TreeElem antipode_plus(const TreePtr& monomial);
TreeElem twisted_antipode_plus(const TreePtr& monomial);
MinusElem antipode_minus(const Forest& f, bool extended = false);
MinusElem twisted_antipode_minus(const Forest& f, bool extended = false);

// ---------------------------------------------------------------------------
// Characters. A character is determined by its values on generators: for the
// positive algebra these are X_t, X_x and the single-factor trees I_k(tau)
// (the evaluator decomposes a monomial and multiplies); for the negative
// algebra the generators are the individual forest components. Root
// o-decorations evaluate to 1 (they are inert markers).
// ---------------------------------------------------------------------------
template <class V>
using TreeFn = std::function<V(const TreePtr&)>;

template <class V>
V char_plus_eval(const TreeFn<V>& g, const TreePtr& monomial);
template <class V>
V char_minus_eval(const TreeFn<V>& g, const Forest& f);

// Convolution (f * g)(u) = (f ox g) Delta u and inverses f o Antipode.
template <class V>
V char_plus_convolve(const TreeFn<V>& f, const TreeFn<V>& g, const TreePtr& u);
template <class V>
V char_plus_inverse(const TreeFn<V>& f, const TreePtr& u);
template <class V>
V char_minus_convolve(const TreeFn<V>& f, const TreeFn<V>& g, const Forest& u,
                      bool extended = false);
template <class V>
V char_minus_inverse(const TreeFn<V>& f, const Forest& u, bool extended = false);

// ---------------------------------------------------------------------------
// Group actions on the model space. Coefficient maps keyed by output tree;
// rational instantiation used by the exact tests, double by the numerics.
//   recentring:      Gamma_g = (id ox g) Delta+        (degree non-increasing)
//   renormalisation: M_g     = (g ox id) Delta-        (degree non-decreasing)
// ---------------------------------------------------------------------------
template <class V>
using ValComb = std::map<TreePtr, V, TreeLess>;

template <class V>
ValComb<V> action_gamma(const TreeFn<V>& g, const TreePtr& t);
template <class V>
ValComb<V> action_renorm(const TreeFn<V>& g, const TreePtr& t, bool extended = false);

// ---------------------------------------------------------------------------
// Projections from the extended decorated trees back to plain ones: set every
// o-decoration to zero and re-apply the normalisation I_k(X^n) = 0 (so a tree
// kept alive only by its o-decorations projects to zero).
// ---------------------------------------------------------------------------
std::optional<TreePtr> project_ex(const TreePtr& t);
std::optional<Forest> project_ex_minus(const Forest& f);

// ---------------------------------------------------------------------------
// Compatibility checks between the two coproducts.
//  identity (1), on the model space:
//      M_-(Delta- ox Delta-) Delta+  ==  (id ox Delta+) Delta-
//  identity (2), on positive monomials:
//      Delta- TwistedA+  ==  (id ox TwistedA+) Delta-
// Both hold in extended mode and (1) is expected to fail in plain mode.
// Returns a description of the first differing term, or nullopt on success.
// ---------------------------------------------------------------------------
std::optional<std::string> cointeraction_tree(const TreePtr& t, bool extended);
std::optional<std::string> cointeraction_plus(const TreePtr& u, bool extended);

// ---------------------------------------------------------------------------
// Law suite used by the verification subcommand: runs the structural laws
// over every basis tree up to the degree cutoff and reports one result per
// law with a witness string for the first failure.
// ---------------------------------------------------------------------------
struct LawResult {
  std::string law;
  bool pass = true;
  std::string witness;
};
std::vector<LawResult> hopf_check_suite(const std::vector<TreePtr>& basis, Degree cutoff,
                                        bool extended);

}  // namespace loopren
