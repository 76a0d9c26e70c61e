#include <doctest.h>

#include "loopren/forest.hpp"
#include "loopren/lincomb.hpp"
#include "loopren/tree.hpp"
#include "support/random_tree.hpp"

using namespace loopren;

TEST_CASE("multiindex weight and binomials") {
  CHECK(MultiIndex{0, 0}.weight() == 0);
  CHECK(MultiIndex{1, 0}.weight() == 2);  // time direction counts twice
  CHECK(MultiIndex{0, 3}.weight() == 3);
  CHECK(MultiIndex{2, 1}.weight() == 5);
  CHECK(mi_binom({2, 1}, {1, 1}) == Rational(2));
  CHECK(mi_binom({3, 2}, {1, 1}) == Rational(6));
  CHECK(mi_binom({1, 0}, {0, 1}) == Rational(0));  // not dominated
  CHECK(mi_factorial({3, 2}) == Rational(12));
  CHECK(mi_factorial({0, 0}) == Rational(1));
}

TEST_CASE("degree ordering is lexicographic in the kappa part") {
  Degree a{Rational(1, 2), -5};   // 1/2 - 5k
  Degree b{Rational(1, 2), -1};   // 1/2 - k
  Degree c{Rational(0), 3};       // 3k
  Degree z{};
  CHECK(a < b);
  CHECK(z < c);
  CHECK(c.positive());
  CHECK(Degree{Rational(0), -1}.negative());
  CHECK((a + b) == Degree{Rational(1), -6});
  CHECK(degree_to_string(Degree{Rational(-3, 2), -1}) == "-3/2-kappa");
  CHECK(degree_to_string(Degree{Rational(1, 2), 0}) == "1/2");
  CHECK(degree_to_string(Degree{Rational(0), -2}) == "-2*kappa");
  CHECK(degree_to_string(Degree{Rational(1), 1}) == "1+kappa");
}

TEST_CASE("rational formatting and parsing") {
  CHECK(rational_to_string(Rational(-7, 2)) == "-3.5");
  CHECK(rational_to_string(Rational(1, 3)) == "1/3");
  CHECK(rational_to_string(Rational(5)) == "5");
  CHECK(rational_to_string(Rational(1, 8)) == "0.125");
  CHECK(rational_to_string(Rational(-1, 200)) == "-0.005");
  CHECK(parse_rational("-3.5") == Rational(-7, 2));
  CHECK(parse_rational("4/6") == Rational(2, 3));
  CHECK(parse_rational("12") == Rational(12));
  CHECK(parse_rational("0.25") == Rational(1, 4));
  CHECK(!parse_rational("1/0"));
  CHECK(!parse_rational("a"));
  CHECK(!parse_rational("1.2.3"));
}

TEST_CASE("canonical trees: products commute, children sorted") {
  auto a = mul(xi(1), *integ({0, 1}, xi(2)));
  auto b = mul(*integ({0, 1}, xi(2)), xi(1));
  CHECK(tree_eq(a, b));
  CHECK(tree_to_string(a) == tree_to_string(b));

  auto t1 = mul(mul(xi(1), xi(2)), xpow({1, 0}));
  auto t2 = mul(xpow({1, 0}), mul(xi(2), xi(1)));
  CHECK(tree_eq(t1, t2));

  CHECK(is_one(one()));
  CHECK(tree_eq(mul(a, one()), a));
}

TEST_CASE("integration collapses on bare monomials") {
  CHECK(!integ({0, 0}, one()));
  CHECK(!integ({0, 1}, xpow({2, 1})));
  CHECK(integ({0, 0}, xi(1)));
  // a vertex carrying a nonzero o decoration does not collapse
  auto odot = make_tree({}, Degree{Rational(-1, 2), -1}, {});
  CHECK(integ({0, 1}, odot));
}

TEST_CASE("degrees of the basic symbols") {
  auto d = [](const TreePtr& t) { return deg_minus(*t); };
  CHECK(d(xi(1)) == Degree{Rational(-3, 2), -1});
  auto iXi = *integ({0, 0}, xi(1));
  CHECK(d(iXi) == Degree{Rational(1, 2), -1});
  auto ipXi = *integ({0, 1}, xi(1));
  CHECK(d(ipXi) == Degree{Rational(-1, 2), -1});
  auto prod = mul(ipXi, ipXi);
  CHECK(d(prod) == Degree{Rational(-1), -2});
  auto wrapped = *integ({0, 1}, prod);
  CHECK(d(wrapped) == Degree{Rational(0), -2});  // the -2k borderline tree
  CHECK(d(xpow({0, 1})) == Degree{Rational(1), 0});
  CHECK(d(xpow({1, 0})) == Degree{Rational(2), 0});
  CHECK(d(mul(xi(1), iXi)) == Degree{Rational(-1), -2});

  // deg_plus adds o decorations anywhere in the tree
  auto inner = make_tree({}, Degree{Rational(-1, 2), -1}, {});
  auto t = *integ({0, 1}, mul(xi(1), inner));
  CHECK(deg_minus(*t) == Degree{Rational(-1, 2), -1});
  CHECK(deg_plus(*t) == Degree{Rational(-1), -2});
}

TEST_CASE("positive-structure monomial shape checks") {
  auto iXi = *integ({0, 0}, xi(1));    // deg 1/2 - k > 0
  auto ipXi = *integ({0, 1}, xi(1));   // deg -1/2 - k < 0
  CHECK(tplus_shape(*iXi));
  CHECK(tplus_factors_positive(*iXi));
  CHECK(tplus_shape(*ipXi));
  CHECK(!tplus_factors_positive(*ipXi));
  CHECK(!tplus_shape(**parse_tree("Xi(1)*I(Xi(1))")));
  CHECK(tplus_factors_positive(**parse_tree("X^(1,2)*I(Xi(1))")));
}

TEST_CASE("parse/print examples") {
  auto t = parse_tree("I'(Xi(1))*I'(Xi(1))");
  REQUIRE(t);
  CHECK(tree_to_string(*t) == "I'(Xi(1))*I'(Xi(1))");
  CHECK(deg_minus(**t) == Degree{Rational(-1), -2});

  std::string err;
  CHECK(!parse_tree("I(1)", &err));
  CHECK(err.empty());  // exact zero, not a syntax error
  CHECK(!parse_tree("I(X^(2,0))", &err));
  CHECK(err.empty());
  CHECK(!parse_tree("I(", &err));
  CHECK(!err.empty());
  CHECK(!parse_tree("Xi(0)", &err));
  CHECK(!err.empty());
  CHECK(!parse_tree("I'(Xi(1)) trailing", &err));
  CHECK(!err.empty());

  // X alone is shorthand for X^(0,1)
  CHECK(tree_eq(*parse_tree("X"), xpow({0, 1})));
  // grouping parentheses and whitespace
  auto g = parse_tree("  X^(1,0) * ( Xi(2) * I[2,1]( Xi(1) * X^(0,1) ) ) ");
  REQUIRE(g);
  auto h = parse_tree(tree_to_string(**g));
  REQUIRE(h);
  CHECK(tree_eq(*g, *h));
  // o decorations survive the round trip
  auto o = parse_tree("I'(O[-1/2;-1]*Xi(1))");
  REQUIRE(o);
  CHECK(tree_eq(*parse_tree(tree_to_string(**o)), *o));
}

TEST_CASE("parse/print round trip on random trees") {
  testing::RandomTreeGen gen(20260814);
  gen.with_o = true;
  for (int it = 0; it < 3000; ++it) {
    TreePtr t = gen.tree(3);
    std::string s = tree_to_string(*t);
    std::string err;
    auto back = parse_tree(s, &err);
    REQUIRE_MESSAGE(back, s << " err=" << err);
    CHECK_MESSAGE(tree_eq(*back, t), s);
  }
}

TEST_CASE("forests: unit absorption and ordering") {
  auto ipXi = *integ({0, 1}, xi(1));
  Forest f1 = forest_mul(forest_of(ipXi), forest_of(xi(1)));
  Forest f2 = forest_mul(forest_of(xi(1)), forest_of(ipXi));
  CHECK(forest_cmp(f1, f2) == 0);
  CHECK(forest_of(one()).is_unit());
  CHECK(forest_mul(f1, forest_of(one())).items.size() == 2);
  CHECK(forest_deg_minus(f1) == Degree{Rational(-2), -2});
  CHECK(forest_to_string(forest_unit()) == "1");
  CHECK(forest_to_string(f1) == "{Xi(1), I'(Xi(1))}");
}

TEST_CASE("linear combinations collect and cancel") {
  LinComb<TreePtr, TreeLess> lc;
  auto a = mul(xi(1), *integ({0, 1}, xi(2)));
  auto b = mul(*integ({0, 1}, xi(2)), xi(1));  // same canonical tree
  lc.add(a, Rational(1, 2));
  lc.add(b, Rational(1, 2));
  CHECK(lc.terms.size() == 1);
  CHECK(lc.terms.begin()->second == Rational(1));
  lc.add(a, Rational(-1));
  CHECK(lc.is_zero());
}
