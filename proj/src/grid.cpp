#include "loopren/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "loopren/rng.hpp"

namespace loopren::grid {

namespace {

int wrapc(int c, int nx) {
  int r = c % nx;
  return r < 0 ? r + nx : r;
}

double ipow(double x, long long n) {
  double r = 1;
  for (long long i = 0; i < n; ++i) r *= x;
  return r;
}

long long binom_ll(long long n, long long k) {
  long long r = 1;
  for (long long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// ---- truncated heat kernel -------------------------------------------------

// smooth transition: 1 for r <= 1/2, 0 for r >= 1
double cut_profile(double r) {
  if (r <= 0.5) return 1.0;
  if (r >= 1.0) return 0.0;
  const double u = 2.0 * (1.0 - r);  // in (0, 1)
  const double fa = std::exp(-1.0 / u);
  const double fb = std::exp(-1.0 / (1.0 - u));
  return fa / (fa + fb);
}

double cutoff(double t, double x) {
  const double r4 = t * t + x * x * x * x;
  return cut_profile(std::pow(r4, 0.25));
}

// central finite-difference stencils, orders 0..3, divided by h^order
struct DiffStencil {
  std::vector<int> off;
  std::vector<double> coef;
};

const DiffStencil& central_diff(int order) {
  static const DiffStencil table[4] = {
      {{0}, {1.0}},
      {{-1, 1}, {-0.5, 0.5}},
      {{-1, 0, 1}, {1.0, -2.0, 1.0}},
      {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}},
  };
  if (order < 0 || order > 3) throw std::invalid_argument("cutoff derivative order out of range");
  return table[order];
}

// D^(at,ax) of the cutoff by tensor-product central differences
double cutoff_fd(int at, int ax, double t, double x) {
  const double h = 1e-4;
  const DiffStencil& st = central_diff(at);
  const DiffStencil& sx = central_diff(ax);
  double acc = 0;
  for (std::size_t i = 0; i < st.off.size(); ++i)
    for (std::size_t j = 0; j < sx.off.size(); ++j)
      acc += st.coef[i] * sx.coef[j] * cutoff(t + st.off[i] * h, x + sx.off[j] * h);
  return acc / ipow(h, at + ax);
}

double heat_g(double t, double x) {
  return std::exp(-x * x / (4 * t)) / std::sqrt(4 * M_PI * t);
}

// Coefficients (in x) of the prefactor polynomials p_n with D_x^n G = p_n G,
// from p_0 = 1, p_{n+1} = p_n' - x/(2t) p_n.
std::vector<std::vector<double>> deriv_polys(int max_order, double t) {
  std::vector<std::vector<double>> p(max_order + 1);
  p[0] = {1.0};
  for (int n = 0; n < max_order; ++n) {
    std::vector<double> next(p[n].size() + 1, 0.0);
    for (std::size_t i = 1; i < p[n].size(); ++i) next[i - 1] += double(i) * p[n][i];
    for (std::size_t i = 0; i < p[n].size(); ++i) next[i + 1] -= p[n][i] / (2 * t);
    p[n + 1] = std::move(next);
  }
  return p;
}

double poly_eval(const std::vector<double>& c, double x) {
  double r = 0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

// ---- FFT machinery ---------------------------------------------------------

std::mutex& fftw_mutex() {
  static std::mutex mu;
  return mu;
}

int next_5smooth(int n) {
  for (;; ++n) {
    int m = n;
    for (int p : {2, 3, 5})
      while (m % p == 0) m /= p;
    if (m == 1) return n;
  }
}

}  // namespace

// ---- grid spec & fields ----------------------------------------------------

int GridSpec::nt() const { return int(std::floor(horizon / dt + 1e-9)) + 1; }

void GridSpec::validate() const {
  if (nx < 2) throw std::invalid_argument("grid needs at least two spatial cells");
  if (!(dt > 0)) throw std::invalid_argument("grid time step must be positive");
  if (!(horizon > 0)) throw std::invalid_argument("grid horizon must be positive");
  const double bound = dx() * dx() / 2;
  if (dt > bound * (1 + 1e-12))
    throw std::invalid_argument("time step exceeds the parabolic bound dx^2/2");
}

Field make_field(const GridSpec& g) {
  g.validate();
  Field f;
  f.nt = g.nt();
  f.nx = g.nx;
  f.dt = g.dt;
  f.dx = g.dx();
  f.valid_from = 0;
  f.valid_to = f.nt;
  f.v.assign(std::size_t(f.nt) * f.nx, 0.0);
  return f;
}

Field white_noise(const GridSpec& g, std::uint64_t stream_seed) {
  Field f = make_field(g);
  Rng rng(stream_seed);
  const double sd = 1.0 / std::sqrt(g.dt * g.dx());
  for (double& u : f.v) u = sd * rng.normal();
  return f;
}

// ---- mollifier ---------------------------------------------------------

Stencil mollifier(const GridSpec& g, double eps) {
  g.validate();
  const double dx = g.dx();
  if (eps < 2 * std::max(dx, std::sqrt(g.dt)) * (1 - 1e-12))
    throw std::invalid_argument("grid does not resolve the mollifier width");

  const double half_t = eps * eps / 2, half_x = eps / 2;
  const int ht = int(std::ceil(half_t / g.dt - 0.5 - 1e-12));
  const int hx = int(std::ceil(half_x / dx - 0.5 - 1e-12));
  if (2 * hx + 1 > g.nx) throw std::invalid_argument("mollifier wider than the circle");

  auto bump = [](double u) {  // supported on (-1/2, 1/2)
    const double q = 1 - 4 * u * u;
    return q > 0 ? std::exp(-1.0 / q) : 0.0;
  };
  static const double gl_x[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                 0.8611363115940526};
  static const double gl_w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                 0.3478548451374538};

  Stencil s;
  s.ht = ht;
  s.hx = hx;
  s.dt = g.dt;
  s.dx = dx;
  s.w.assign(std::size_t(2 * ht + 1) * (2 * hx + 1), 0.0);
  // fill one quadrant and mirror: the profile is even in both directions
  // and the mirrored cells must agree bit for bit
  for (int i = 0; i <= ht; ++i)
    for (int j = 0; j <= hx; ++j) {
      double avg = 0;
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 4; ++c) {
          const double t = (i + 0.5 * gl_x[a]) * g.dt;
          const double x = (j + 0.5 * gl_x[c]) * dx;
          avg += gl_w[a] * gl_w[c] * bump(t / (eps * eps)) * bump(x / eps);
        }
      avg /= 4;  // product of two unit-weight quadratures
      s.at(i, j) = s.at(-i, j) = s.at(i, -j) = s.at(-i, -j) = avg;
    }
  double mass = 0;
  for (double u : s.w) mass += u;
  mass *= g.dt * dx;
  if (!(mass > 0)) throw std::invalid_argument("mollifier table degenerated to zero mass");
  for (double& u : s.w) u /= mass;
  return s;
}

// ---- kernel tables -----------------------------------------------------

Field kernel_table(const GridSpec& g, MultiIndex k, MultiIndex weight) {
  g.validate();
  if (k.kt < 0 || k.kx < 0 || weight.kt < 0 || weight.kx < 0)
    throw std::invalid_argument("kernel table orders must be non-negative");
  const int ntk = int(std::floor(1.0 / g.dt + 1e-9));
  Field K;
  K.nt = ntk + 1;
  K.nx = g.nx;
  K.dt = g.dt;
  K.dx = g.dx();
  K.valid_from = 0;
  K.valid_to = K.nt;
  K.v.assign(std::size_t(K.nt) * g.nx, 0.0);

  const int max_dx_order = int(2 * k.kt + k.kx);
  for (int r = 1; r <= ntk; ++r) {
    const double t = r * g.dt;
    const auto polys = deriv_polys(max_dx_order, t);
    for (int c = 0; c < g.nx; ++c) {
      double acc = 0;
      for (int img = -1; img <= 1; ++img) {
        const double x = c * K.dx + img;
        const double r4 = t * t + x * x * x * x;
        if (r4 >= 1.0) continue;
        const double G = heat_g(t, x);
        double val;
        if (std::pow(r4, 0.25) <= 0.499999) {
          // untouched core: the cutoff is identically one
          if (G < 1e-280) continue;
          val = poly_eval(polys[max_dx_order], x) * G;
        } else {
          if (G < 1e-280) continue;  // Gaussian tail has died before the cutoff region
          val = 0;
          for (long long jt = 0; jt <= k.kt; ++jt)
            for (long long jx = 0; jx <= k.kx; ++jx) {
              const double gpart = poly_eval(polys[int(2 * jt + jx)], x) * G;
              const double cpart = cutoff_fd(int(k.kt - jt), int(k.kx - jx), t, x);
              val += double(binom_ll(k.kt, jt)) * double(binom_ll(k.kx, jx)) * gpart * cpart;
            }
        }
        val *= ipow(-t, weight.kt) * ipow(-x, weight.kx);
        acc += val;
      }
      K.at(r, c) = acc;
    }
  }
  return K;
}

// ---- convolutions ------------------------------------------------------

namespace {
void check_compatible(const Field& f, const Field& k) {
  if (f.nx != k.nx || std::abs(f.dt - k.dt) > 1e-15 || std::abs(f.dx - k.dx) > 1e-15)
    throw std::invalid_argument("convolution operands live on different lattices");
}
}  // namespace

Field conv_fft(const Field& f, const Field& kernel) {
  check_compatible(f, kernel);
  const int nx = f.nx;
  const int T = next_5smooth(f.nt + kernel.nt);
  const int nc = nx / 2 + 1;

  double* ra = fftw_alloc_real(std::size_t(T) * nx);
  double* rb = fftw_alloc_real(std::size_t(T) * nx);
  fftw_complex* ca = fftw_alloc_complex(std::size_t(T) * nc);
  fftw_complex* cb = fftw_alloc_complex(std::size_t(T) * nc);
  std::memset(ra, 0, sizeof(double) * std::size_t(T) * nx);
  std::memset(rb, 0, sizeof(double) * std::size_t(T) * nx);
  std::memcpy(ra, f.v.data(), sizeof(double) * f.v.size());
  std::memcpy(rb, kernel.v.data(), sizeof(double) * kernel.v.size());

  fftw_plan pa, pb, pi;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    pa = fftw_plan_dft_r2c_2d(T, nx, ra, ca, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_2d(T, nx, rb, cb, FFTW_ESTIMATE);
    pi = fftw_plan_dft_c2r_2d(T, nx, ca, ra, FFTW_ESTIMATE);
  }
  fftw_execute(pa);
  fftw_execute(pb);
  const double scale = f.dt * f.dx / (double(T) * nx);
  for (std::size_t i = 0; i < std::size_t(T) * nc; ++i) {
    const double re = ca[i][0] * cb[i][0] - ca[i][1] * cb[i][1];
    const double im = ca[i][0] * cb[i][1] + ca[i][1] * cb[i][0];
    ca[i][0] = re * scale;
    ca[i][1] = im * scale;
  }
  fftw_execute(pi);

  Field out;
  out.nt = f.nt;
  out.nx = nx;
  out.dt = f.dt;
  out.dx = f.dx;
  out.valid_from = f.valid_from + kernel.nt - 1;
  out.valid_to = f.valid_to;
  out.v.assign(ra, ra + f.v.size());

  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(pi);
  }
  fftw_free(ra);
  fftw_free(rb);
  fftw_free(ca);
  fftw_free(cb);
  return out;
}

Field conv_direct(const Field& f, const Field& kernel) {
  check_compatible(f, kernel);
  Field out;
  out.nt = f.nt;
  out.nx = f.nx;
  out.dt = f.dt;
  out.dx = f.dx;
  out.valid_from = f.valid_from + kernel.nt - 1;
  out.valid_to = f.valid_to;
  out.v.assign(f.v.size(), 0.0);
  const double scale = f.dt * f.dx;
  for (int r = 0; r < f.nt; ++r)
    for (int c = 0; c < f.nx; ++c) {
      double acc = 0;
      const int smax = std::min(kernel.nt - 1, r);
      for (int s = 0; s <= smax; ++s)
        for (int j = 0; j < f.nx; ++j) acc += kernel.at(s, j) * f.at(r - s, wrapc(c - j, f.nx));
      out.at(r, c) = acc * scale;
    }
  return out;
}

Field conv_stencil(const Field& f, const Stencil& s) {
  if (2 * s.hx + 1 > f.nx) throw std::invalid_argument("stencil wider than the circle");
  Field out;
  out.nt = f.nt;
  out.nx = f.nx;
  out.dt = f.dt;
  out.dx = f.dx;
  out.valid_from = f.valid_from + s.ht;
  out.valid_to = f.valid_to - s.ht;
  out.v.assign(f.v.size(), 0.0);
  const double scale = f.dt * f.dx;
  for (int r = s.ht; r < f.nt - s.ht; ++r)
    for (int c = 0; c < f.nx; ++c) {
      double acc = 0;
      for (int i = -s.ht; i <= s.ht; ++i)
        for (int j = -s.hx; j <= s.hx; ++j) acc += s.at(i, j) * f.at(r - i, wrapc(c - j, f.nx));
      out.at(r, c) = acc * scale;
    }
  return out;
}

Field corr_stencil_fft(const Field& f, const Stencil& s) {
  if (2 * s.hx + 1 > f.nx) throw std::invalid_argument("stencil wider than the circle");
  // correlation = convolution with the reflected stencil, rows shifted by ht
  Field kf;
  kf.nt = 2 * s.ht + 1;
  kf.nx = f.nx;
  kf.dt = f.dt;
  kf.dx = f.dx;
  kf.valid_from = 0;
  kf.valid_to = kf.nt;
  kf.v.assign(std::size_t(kf.nt) * kf.nx, 0.0);
  for (int i = -s.ht; i <= s.ht; ++i)
    for (int j = -s.hx; j <= s.hx; ++j) kf.at(s.ht - i, wrapc(-j, f.nx)) = s.at(i, j);

  const Field c = conv_fft(f, kf);
  Field out;
  out.nt = f.nt;
  out.nx = f.nx;
  out.dt = f.dt;
  out.dx = f.dx;
  out.valid_from = f.valid_from + s.ht;
  out.valid_to = std::min(f.valid_to, f.nt) - s.ht;
  out.v.assign(f.v.size(), 0.0);
  for (int r = 0; r + s.ht < f.nt; ++r)
    for (int col = 0; col < f.nx; ++col) out.at(r, col) = c.at(r + s.ht, col);
  return out;
}

Field coordinate_pow(const GridSpec& g, MultiIndex a, int r0, int c0) {
  Field f = make_field(g);
  for (int r = 0; r < f.nt; ++r) {
    const double t = (r - r0) * g.dt;
    for (int c = 0; c < f.nx; ++c) {
      int d = wrapc(c - c0, g.nx);
      if (d >= g.nx - g.nx / 2) d -= g.nx;  // centred representative in [-nx/2, nx/2)
      const double x = d * g.dx();
      f.at(r, c) = ipow(t, a.kt) * ipow(x, a.kx);
    }
  }
  return f;
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

double slab_mean(const Field& f, int rows) {
  if (rows <= 0 || f.valid_to - f.valid_from < rows)
    throw std::invalid_argument("slab taller than the valid window");
  const int lo = f.valid_to - rows;
  const double s = pairwise_sum(f.v.data() + std::size_t(lo) * f.nx, std::size_t(rows) * f.nx);
  return s / (double(rows) * f.nx);
}

}  // namespace loopren::grid
