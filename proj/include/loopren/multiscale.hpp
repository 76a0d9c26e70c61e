#pragma once
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "loopren/rng.hpp"

// Parabolic multiscale toolkit: hierarchical clustering of space-time
// configurations into scale-labelled binary trees, the two power-counting
// conditions that govern dyadic sums over label assignments, and brute-force
// evaluation of those sums for scaling regressions.
namespace loopren::multiscale {

// Space-time point; time weighs twice:
//   dist((t,x),(s,y)) = |t-s|^{1/2} + |x-y|.
struct Point {
  double t = 0, x = 0;
};
double parabolic_dist(const Point& a, const Point& b);

// The unique integer n with d <= 2^{-n} < 2d (requires d > 0).
int scale_label(double d);

// Rooted binary tree whose leaves are the configuration points 0..N (leaf 0
// is the implicit origin) and whose interior vertices carry integer scale
// labels: label n means the two merged clusters sit at distance about 2^{-n}.
struct ScaleTree {
  struct Node {
    int leaf = -1;              // leaf id, or -1 for interior vertices
    int left = -1, right = -1;  // children (node indices), interior only
    int parent = -1;
    int label = 0;    // scale label n(x); meaningful on interior vertices
    int min_leaf = 0;  // smallest leaf id underneath
  };
  std::vector<Node> nodes;
  int root = -1;
  int leaf_count = 0;  // N + 1

  int node_of_leaf(int leaf) const;       // node index, -1 if absent
  int meet_nodes(int a, int b) const;     // deepest common ancestor
  int meet(int leaf_a, int leaf_b) const;  // ancestor node of leaf_a ^ leaf_b
  bool in_subtree(int anc, int node) const;

  // Interior vertices in post-order (left subtree, right subtree, vertex);
  // this is the canonical order in which exponent vectors are supplied.
  std::vector<int> interior_postorder() const;

  // The vertex where the origin and the first one or two marked points meet:
  // meet of leaves {0,1} for N = 1, of {0,1,2} otherwise. The dyadic sums
  // constrain this vertex's label from below via the observation scale.
  int star_vertex() const;
  // Interior vertices on the path star_vertex -> root, the root excluded.
  std::vector<int> star_path() const;

  // labels weakly increase away from the root
  bool labels_monotone() const;

  // Leaves print as their id, interior vertices as "(left,right)" with an
  // optional "@<label>" suffix.
  std::string to_string(bool with_labels = true) const;
};

// Parse the to_string grammar (labels optional). Throws std::invalid_argument
// on malformed input, duplicate or non-contiguous leaf ids.
ScaleTree parse_shape(const std::string& s);

// Agglomerative clustering of the configuration {origin, z_1, ..., z_N}:
// repeatedly merge the two clusters at minimal Hausdorff distance (ties break
// to the lexicographically smallest pair of minimal leaf ids); each merge
// vertex gets the label prescribed by scale_label of the merge distance,
// clamped to at most the labels of its children so that labels always weakly
// increase away from the root (greedy Hausdorff merge distances can dip on
// rare configurations; see cluster() for the mechanism). Children are stored
// smaller-min-leaf first. Throws std::invalid_argument if any two points
// coincide (the origin included) or z is empty.
ScaleTree cluster(const std::vector<Point>& z);

// Uniform configuration in the unit box (0,1)^2 (never colliding with the
// origin); convenience sampler for the statistical checks.
std::vector<Point> random_configuration(int n_points, Rng& rng);

// ---------------------------------------------------------------------------
// Power counting for dyadic sums  sum_n prod_x 2^{-eta(x) n(x)}  over weakly
// increasing integer labellings n of a fixed shape, where the star vertex is
// pinned from below by the observation scale: 2^{-n(star)} <= C*lambda.
// ---------------------------------------------------------------------------

struct SumConditions {
  bool small_scale = true;  // every subtree exponent sum is > 0
  bool large_scale = true;  // every star-path complement sum is < 0
  std::string witness;      // first violated vertex, empty when both hold
  bool both() const { return small_scale && large_scale; }
};

// eta is indexed by interior_postorder order.
SumConditions check_sum_conditions(const ScaleTree& shape, const std::vector<double>& eta);

struct SumOptions {
  double big_c = 2.0;      // constant in 2^{-n(star)} <= big_c * lambda
  int base_window = 12;    // initial label half-width around the pinned scale
  int window_step = 8;     // widening per sweep
  int max_window = 60;     // give up (divergence) beyond this half-width
  double rel_tol = 1e-3;   // relative change defining convergence
  bool constrain_star = true;  // drop the lambda constraint when false
  // optional hard floor for all labels (unit-size domain regime)
  std::optional<int> floor_label;
};

struct SumResult {
  double value = 0;       // value at the final window
  bool converged = false;  // widening the window stopped changing the value
  int window = 0;          // final half-width used
  std::string note;
};

SumResult bounded_sum(const ScaleTree& shape, const std::vector<double>& eta, double lambda,
                      const SumOptions& opts = {});

struct SlopeReport {
  std::vector<double> lambdas;
  std::vector<double> values;
  double slope = 0;  // of log2(value) against log2(1/lambda)
  bool all_converged = true;
};

// Evaluates bounded_sum across the given scales and regresses log2(value)
// against log2(1/lambda); for a convergent exponent vector the slope is the
// negated exponent sum.
SlopeReport bounded_sum_slope(const ScaleTree& shape, const std::vector<double>& eta,
                              const std::vector<double>& lambdas, const SumOptions& opts = {});

// ---------------------------------------------------------------------------
// Worked exponent assignments for the second-moment integrals of the basic
// symbols (kernel power counting done by hand: each kernel or covariance
// factor contributes its singularity order to the vertex where its endpoints
// separate, and every interior vertex gains the parabolic dimension 3 from
// the volume of its dyadic shell).
// ---------------------------------------------------------------------------
struct EtaEntry {
  std::string id;
  std::string shape;         // parseable by parse_shape
  std::vector<double> eta;   // interior post-order
  double eta_sum = 0;
  bool expect_conditions = false;  // whether both sum conditions hold
  std::string note;
};

const std::vector<EtaEntry>& eta_library();
std::optional<EtaEntry> eta_library_entry(const std::string& id);

// ---------------------------------------------------------------------------
// Distance equivalence: over random configurations, the pairwise distance of
// any two points is equivalent to the dyadic scale of their meet vertex.
// Ratios are reported against the base 2^{-n-1}, so the single-pair case is
// pinned to the envelope (1, 2] by the label rule itself.
// ---------------------------------------------------------------------------
struct DistanceFit {
  double c = std::numeric_limits<double>::infinity();  // min ratio observed
  double C = 0;                                        // max ratio observed
  long long pairs = 0;
  bool envelope_ok = true;  // all ratios within (1, 2] (single-pair exactness)
};

DistanceFit verify_distance_equivalence(int n_points, int samples, std::uint64_t seed);

}  // namespace loopren::multiscale
