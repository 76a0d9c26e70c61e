#pragma once
#include <cstdint>
#include <vector>

#include "loopren/multiindex.hpp"

namespace loopren::grid {

// Uniform lattice on [0, horizon] x (circle of circumference 1). The spatial
// step is dx = 1/nx; cell (r, c) sits at (t, x) = (r*dt, c*dx). The time step
// must satisfy the parabolic stability/scaling bound dt <= dx^2 / 2.
struct GridSpec {
  int nx = 0;
  double dt = 0;
  double horizon = 0;

  double dx() const { return 1.0 / nx; }
  int nt() const;  // number of rows: floor(horizon/dt) + 1

  // Throws std::invalid_argument when nx/dt/horizon are non-positive or the
  // parabolic bound dt <= dx^2/2 fails.
  void validate() const;
};

// A real-valued function sampled on the lattice, row-major in (t, x). Rows in
// [valid_from, valid_to) hold fully converged values; rows outside carry
// partially convolved boundary data and must not enter any statistic.
struct Field {
  int nt = 0, nx = 0;
  double dt = 0, dx = 0;
  int valid_from = 0, valid_to = 0;
  std::vector<double> v;

  double& at(int r, int c) { return v[std::size_t(r) * nx + c]; }
  double at(int r, int c) const { return v[std::size_t(r) * nx + c]; }
};

Field make_field(const GridSpec& g);  // zeros, all rows marked valid

// A small kernel table centred at the origin, offsets [-ht..ht] x [-hx..hx].
struct Stencil {
  int ht = 0, hx = 0;
  double dt = 0, dx = 0;
  std::vector<double> w;

  double at(int it, int ix) const { return w[std::size_t(it + ht) * (2 * hx + 1) + (ix + hx)]; }
  double& at(int it, int ix) { return w[std::size_t(it + ht) * (2 * hx + 1) + (ix + hx)]; }
};

// i.i.d. centred Gaussian cells with variance 1/(dt*dx) (the lattice white
// noise); bit-identical for a given (spec, stream_seed).
Field white_noise(const GridSpec& g, std::uint64_t stream_seed);

// Cell-averaged table of the rescaled mollifier eps^{-3} rho(t/eps^2, x/eps),
// where rho is the product of two smooth bumps supported on [-1/2, 1/2],
// normalised so that the discrete mass sum(w)*dt*dx is exactly 1. Throws
// std::invalid_argument when the grid does not resolve the mollifier, i.e.
// eps < 2*max(dx, sqrt(dt)).
Stencil mollifier(const GridSpec& g, double eps);

// Space-time derivative table D^k of the truncated heat kernel
//   K = G * chi,  G(t, x) = (4 pi t)^{-1/2} exp(-x^2/(4t)),  K(t<=0, .) = 0,
// with chi a smooth radial cutoff in the parabolic gauge r = (t^2 + x^4)^{1/4}
// equal to 1 for r <= 1/2 and 0 for r >= 1, periodised over the unit circle
// in x. The optional weight multiplies the table by (-t)^{a_t} (-x)^{a_x}
// (argument taken before periodisation), as needed for re-expanding
// polynomial decorations across a convolution. Rows run over 0 <= t <= 1;
// row 0 is identically zero.
Field kernel_table(const GridSpec& g, MultiIndex k, MultiIndex weight = {});

// Space-time convolution (K * f)(z) = sum_w K(w) f(z - w) dt dx, circular in
// x, linear in t. conv_fft uses zero-padded real FFTs; conv_direct is the
// straightforward quadruple loop kept as an independent reference. Both
// return a field of f's height with validity advanced past the kernel rows.
Field conv_fft(const Field& f, const Field& kernel);
Field conv_direct(const Field& f, const Field& kernel);

// Same operation against a small centred stencil (direct summation).
Field conv_stencil(const Field& f, const Stencil& s);

// Correlation against a centred stencil, out(z) = sum_w s(w) f(z + w) dt dx
// (the pairing of f with a test function translated to z).
Field corr_stencil_fft(const Field& f, const Stencil& s);

// Monomial field ((r - r0) dt)^{a_t} * wrap((c - c0) dx)^{a_x}, the spatial
// displacement wrapped to the centred fundamental domain [-1/2, 1/2).
Field coordinate_pow(const GridSpec& g, MultiIndex a, int r0, int c0);

// Deterministic order-independent reduction (recursive pairwise summation).
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const std::vector<double>& x);

// Mean of f over the last `rows` valid rows, all of x.
double slab_mean(const Field& f, int rows);

}  // namespace loopren::grid
