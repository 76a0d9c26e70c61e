#pragma once
#include <map>
#include <string>
#include <vector>

#include "loopren/tree.hpp"

namespace loopren {

// The generated basis: W is the right-hand-side sector, U the solution
// sector (integrated once), Uprime the gradient sector (integrated with one
// spatial derivative). U and Uprime are subsets of W by construction.
struct StructureIndex {
  int m = 1;                // number of driving noises
  Degree gamma_max;         // degree cutoff (inclusive)
  bool xk_closure = true;   // close W under multiplication by X^k

  struct Entry {
    TreePtr t;
    Degree deg;  // deg_minus, the plain grading
    bool in_W = false, in_U = false, in_Up = false;
  };
  std::vector<Entry> basis;                   // sorted by (deg, tree order)
  std::map<Degree, std::vector<int>> strata;  // degree -> basis positions

  int find(const TreePtr& t) const;  // basis position or -1
};

// Fixpoint of: Xi_i in W; X^k in W for |k| <= gamma_max; tau in W =>
// I(tau) in U, I'(tau) in Uprime (degree permitting); for tau = tau_1...tau_r
// with tau_i in U and sigma_1, sigma_2 in Uprime, all of
// {tau, tau*Xi_j, tau*sigma_1, tau*sigma_1*sigma_2} lie in W; optionally W is
// closed under multiplication by X^k. Everything is pruned at gamma_max.
// Throws std::runtime_error if the basis would exceed max_elements.
StructureIndex generate(int m, Degree gamma_max, bool xk_closure = true,
                        std::size_t max_elements = 500000);

// Counts of negative-degree W elements under symmetry reductions:
//   a     raw count
//   b     noise shapes (noise indices erased before counting)
//   c     only trees with an even number of noise edges
//   d     only trees with even total spatial derivative order
// plus all combinations of b, c, d.
struct CountRow {
  std::string convention;
  long long count = 0;
};
std::vector<CountRow> count_negative(const StructureIndex& idx);

// For every basis element tau with deg(tau) <= gamma_max - 2, checks that all
// left tensor factors of the recentring coproduct lie in the generated basis.
struct ClosureReport {
  int checked = 0;
  std::vector<std::pair<TreePtr, TreePtr>> violations;  // (tau, missing left factor)
};
ClosureReport sector_closure_check(const StructureIndex& idx);

// degree strings for the CLI / JSON: "<q>", "<q>+<m>k", "<m>k" (k == kappa)
std::optional<Degree> parse_degree(const std::string& s);
std::string degree_to_cli_string(const Degree& d);

}  // namespace loopren
