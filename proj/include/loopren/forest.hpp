#pragma once
#include <string>
#include <vector>

#include "loopren/tree.hpp"

namespace loopren {

// Commutative product of trees (multiset, kept sorted). The empty forest is
// the unit; bare-monomial factors equal to 1 are absorbed into the unit on
// construction.
struct Forest {
  std::vector<TreePtr> items;

  bool is_unit() const { return items.empty(); }
};

Forest forest_unit();
Forest forest_of(const TreePtr& t);
Forest forest_mul(const Forest& a, const Forest& b);
int forest_cmp(const Forest& a, const Forest& b);

struct ForestLess {
  bool operator()(const Forest& a, const Forest& b) const { return forest_cmp(a, b) < 0; }
};

Degree forest_deg_minus(const Forest& f);
Degree forest_deg_plus(const Forest& f);

std::string forest_to_string(const Forest& f);

}  // namespace loopren
