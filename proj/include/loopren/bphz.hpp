#pragma once
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "loopren/grid.hpp"
#include "loopren/stats.hpp"
#include "loopren/structure.hpp"
#include "loopren/tree.hpp"

namespace loopren::bphz {

// One realisation of the mollified noises xi_i^eps = rho^eps * xi,
// i = 1..m, on a common grid.
struct NoiseField {
  grid::GridSpec g;
  double eps = 0;
  std::vector<grid::Field> xi;  // index i-1
};
NoiseField sample_noise(const grid::GridSpec& g, double eps, int m, std::uint64_t seed);

// Lazily built kernel derivative tables D^k K with polynomial weights,
// shared across trees and noise realisations on one grid geometry.
class KernelCache {
 public:
  explicit KernelCache(const grid::GridSpec& g) : g_(g) {}
  const grid::Field& get(MultiIndex k, MultiIndex weight = {});
  const grid::GridSpec& spec() const { return g_; }

 private:
  grid::GridSpec g_;
  std::map<std::pair<MultiIndex, MultiIndex>, std::unique_ptr<grid::Field>> tables_;
  std::mutex mu_;
};

// Evaluation state for lifting trees against one noise realisation.
struct LiftContext {
  const NoiseField* noise = nullptr;
  KernelCache* kernels = nullptr;

  // internal memo of jet decompositions, keyed by subtree
  struct JetMemo;
  std::shared_ptr<JetMemo> memo;

  LiftContext(const NoiseField& n, KernelCache& k);
};

// Canonical lift: noise symbols become the mollified fields, products are
// pointwise, kernel symbols convolve with the derivative tables, and
// polynomial symbols multiply by coordinates centred at the lattice point
// (origin_r, origin_c). Throws std::runtime_error for symbols outside the
// lattice model (e.g. unknown noise indices).
grid::Field lift(const TreePtr& tau, LiftContext& ctx, int origin_r = 0, int origin_c = 0);

// The stationary diagonal z -> (Pi_z tau)(z) of the same lift, i.e. the lift
// with every polynomial symbol evaluated at the base point. This is the field
// whose expectation the renormalisation character estimates.
grid::Field lift_base_point(const TreePtr& tau, LiftContext& ctx);

struct EstimateOptions {
  int m = 1;           // number of driving noises (raised to the tree's needs automatically)
  int fields = 0;      // independent noise realisations; 0 = derive from min_samples
  int slab_rows = 128; // rows of the stationary averaging window per realisation
  int workers = 1;     // worker threads over realisations (output independent of it)
};

// Monte-Carlo estimate of E (Pi tau)(0): averages lift_base_point over a
// space-time slab per realisation (stationarity) and reports the batch-mean
// standard error across realisations. n = realisations * slab cells.
MeanErr estimate_gminus(const TreePtr& tau, double eps, long long min_samples,
                        std::uint64_t seed, EstimateOptions opts = {});

// Deterministic quadrature of integral (D^k K * rho^eps)^2 dt dx on the same
// lattice: the oracle for E (Pi I_k(Xi)^2)(0).
double quadrature_second_moment(const grid::GridSpec& g, double eps, MultiIndex k);

// Grid convention resolving eps: dx <= eps/2 (nx = ceil(2/eps) rounded up to
// even), dt = dx^2/2, and horizon covering `depth` kernel spans, the
// mollifier margins and `slab_rows` sampling rows.
grid::GridSpec grid_for_eps(double eps, int depth, int slab_rows, int extra_rows = 0);

// Maximal nesting of kernel symbols (each one costs a kernel span of rows).
int kernel_depth(const TreePtr& tau);

// The renormalisation character on the negative part of the structure:
// g(tau) = sum over the twisted-antipode expansion of tau of the product of
// per-factor Monte-Carlo means, with standard errors propagated through the
// products (independent streams per factor) and summed in quadrature.
// Non-negative generators carry the exact value 0.
struct CharEntry {
  TreePtr tau;
  Degree deg;
  MeanErr value;
  bool exact_zero = false;  // degree >= 0, no estimation performed
};
std::vector<CharEntry> bphz_character(const StructureIndex& index, double eps,
                                      long long min_samples, std::uint64_t seed,
                                      EstimateOptions opts = {});

// Character values for exactly the negative trees entering the
// renormalisation of tau (its extraction legs), as a value map.
std::map<TreePtr, MeanErr, TreeLess> character_for_tree(const TreePtr& tau, double eps,
                                                        long long min_samples,
                                                        std::uint64_t seed,
                                                        EstimateOptions opts = {});

// Smooth compactly supported test function phi (product of bumps inside the
// parabolic unit ball, discrete mass 1) rescaled to scale lambda:
// phi^lambda(t, x) = lambda^{-3} phi(t/lambda^2, x/lambda). Throws
// std::invalid_argument when lambda is below the grid resolution.
grid::Stencil test_function(const grid::GridSpec& g, double lambda);

// One scale of the recentred-model pairing <Pihat_z tau, phi_z^lambda>:
// statistics over base points z (a space-time slab) and noise realisations.
struct ScalingPoint {
  double lambda = 0;
  MeanErr pairing_mean;   // E <Pihat_0 tau, phi_0^lambda>
  MeanErr second_moment;  // E <Pihat_0 tau, phi_0^lambda>^2
};

// Recentred (and optionally renormalised) pairings across scales. The model
// recentring follows the admissible recursion: kernel symbols of positive
// degree get their Taylor polynomial at the base point subtracted, negative
// ones are left canonical. When `renormalised` is set, the tree is first
// passed through the renormalisation action with the estimated character
// (independent stream), whose uncertainty is folded into pairing_mean.se.
std::vector<ScalingPoint> scaling_run(const TreePtr& tau, const std::vector<double>& lambdas,
                                      double eps, bool renormalised, long long min_samples,
                                      std::uint64_t seed, EstimateOptions opts = {});

// Least-squares slope of log2(second_moment) against log2(lambda).
double fitted_slope(const std::vector<ScalingPoint>& pts);

}  // namespace loopren::bphz
