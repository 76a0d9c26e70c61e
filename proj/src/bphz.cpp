#include "loopren/bphz.hpp"

#include <algorithm>
#include <boost/rational.hpp>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <thread>

#include "loopren/hopf.hpp"
#include "loopren/rng.hpp"

namespace loopren::bphz {

namespace {

using grid::Field;
using grid::GridSpec;
using grid::Stencil;

double to_d(const Rational& r) { return boost::rational_cast<double>(r); }

// ---- elementwise field algebra (full buffers; validity is metadata) --------

Field field_like(const Field& f) {
  Field out;
  out.nt = f.nt;
  out.nx = f.nx;
  out.dt = f.dt;
  out.dx = f.dx;
  out.valid_from = 0;
  out.valid_to = f.nt;
  out.v.assign(f.v.size(), 0.0);
  return out;
}

void intersect_valid(Field& acc, const Field& f) {
  acc.valid_from = std::max(acc.valid_from, f.valid_from);
  acc.valid_to = std::min(acc.valid_to, f.valid_to);
}

void field_axpy(Field& acc, double c, const Field& x) {
  intersect_valid(acc, x);
  if (c == 1.0) {
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += x.v[i];
  } else {
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += c * x.v[i];
  }
}

Field field_mul(const Field& a, const Field& b) {
  Field out = field_like(a);
  out.valid_from = std::max(a.valid_from, b.valid_from);
  out.valid_to = std::min(a.valid_to, b.valid_to);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

Field field_ones(const GridSpec& g) {
  Field f = grid::make_field(g);
  std::fill(f.v.begin(), f.v.end(), 1.0);
  return f;
}

double slab_mean_sq(const Field& f, int rows) {
  if (rows <= 0 || f.valid_to - f.valid_from < rows)
    throw std::invalid_argument("slab taller than the valid window");
  const int lo = f.valid_to - rows;
  std::vector<double> sq(std::size_t(rows) * f.nx);
  const double* src = f.v.data() + std::size_t(lo) * f.nx;
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = src[i] * src[i];
  return grid::pairwise_sum(sq) / double(sq.size());
}

// ---- jets: Pi_o tau (z) = sum_alpha (z - o)^alpha G_alpha(z) ----------------
// The coefficient fields are independent of the expansion origin o, so the
// alpha = 0 entry is simultaneously the base-point diagonal z -> (Pi_z tau)(z).

using Jet = std::map<MultiIndex, Field>;

void jet_add(Jet& acc, MultiIndex a, double c, Field&& f) {
  auto it = acc.find(a);
  if (it == acc.end()) {
    if (c != 1.0)
      for (double& u : f.v) u *= c;
    acc.emplace(a, std::move(f));
  } else {
    field_axpy(it->second, c, f);
  }
}

Jet jet_mul(const Jet& a, const Jet& b) {
  Jet out;
  for (const auto& [aa, fa] : a)
    for (const auto& [ab, fb] : b) jet_add(out, aa + ab, 1.0, field_mul(fa, fb));
  return out;
}

std::vector<MultiIndex> indices_below(const MultiIndex& alpha) {
  std::vector<MultiIndex> out;
  for (long long it = 0; it <= alpha.kt; ++it)
    for (long long ix = 0; ix <= alpha.kx; ++ix) out.push_back({it, ix});
  return out;
}

}  // namespace

// ---- kernel cache -----------------------------------------------------------

const grid::Field& KernelCache::get(MultiIndex k, MultiIndex weight) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto key = std::make_pair(k, weight);
  auto it = tables_.find(key);
  if (it == tables_.end())
    it = tables_.emplace(key, std::make_unique<grid::Field>(grid::kernel_table(g_, k, weight)))
             .first;
  return *it->second;
}

// ---- noise -------------------------------------------------------------------

NoiseField sample_noise(const grid::GridSpec& g, double eps, int m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("at least one driving noise required");
  const Stencil rho = grid::mollifier(g, eps);  // validates resolution
  NoiseField nf;
  nf.g = g;
  nf.eps = eps;
  nf.xi.reserve(m);
  for (int i = 1; i <= m; ++i) {
    const Field w = grid::white_noise(g, mix_seed(seed, 0x17, std::uint64_t(i)));
    nf.xi.push_back(grid::conv_stencil(w, rho));
  }
  return nf;
}

// ---- lifting ------------------------------------------------------------------

struct LiftContext::JetMemo {
  std::map<TreePtr, Jet, TreeLess> plain;
};

LiftContext::LiftContext(const NoiseField& n, KernelCache& k)
    : noise(&n), kernels(&k), memo(std::make_shared<JetMemo>()) {}

namespace {

const Jet& lift_jet(const TreePtr& t, LiftContext& ctx) {
  auto hit = ctx.memo->plain.find(t);
  if (hit != ctx.memo->plain.end()) return hit->second;

  const GridSpec& g = ctx.noise->g;
  Jet j;
  j.emplace(t->n, field_ones(g));
  for (const Edge& e : t->kids) {
    Jet je;
    if (e.noise > 0) {
      if (!e.k.is_zero())
        throw std::runtime_error("derivatives of the driving noise are not modelled");
      if (e.noise > int(ctx.noise->xi.size()))
        throw std::runtime_error("noise index exceeds the sampled family");
      je.emplace(MultiIndex{0, 0}, ctx.noise->xi[e.noise - 1]);
    } else {
      const Jet& js = lift_jet(e.sub, ctx);
      for (const auto& [alpha, G] : js)
        for (const MultiIndex& beta : indices_below(alpha)) {
          // (w - o)^alpha = sum_beta binom(alpha,beta) (w - z)^beta (z - o)^{alpha-beta}
          const Field& tab = ctx.kernels->get(e.k, beta);
          jet_add(je, alpha - beta, to_d(mi_binom(alpha, beta)), grid::conv_fft(G, tab));
        }
    }
    j = jet_mul(j, je);
  }
  auto [pos, inserted] = ctx.memo->plain.emplace(t, std::move(j));
  (void)inserted;
  return pos->second;
}

}  // namespace

grid::Field lift(const TreePtr& tau, LiftContext& ctx, int origin_r, int origin_c) {
  const Jet& j = lift_jet(tau, ctx);
  const GridSpec& g = ctx.noise->g;
  if (j.size() == 1 && j.begin()->first.is_zero()) return j.begin()->second;
  Field out = grid::make_field(g);
  for (const auto& [alpha, G] : j) {
    if (alpha.is_zero()) {
      field_axpy(out, 1.0, G);
    } else {
      field_axpy(out, 1.0, field_mul(grid::coordinate_pow(g, alpha, origin_r, origin_c), G));
    }
  }
  return out;
}

grid::Field lift_base_point(const TreePtr& tau, LiftContext& ctx) {
  const Jet& j = lift_jet(tau, ctx);
  auto it = j.find(MultiIndex{0, 0});
  if (it == j.end()) return grid::make_field(ctx.noise->g);  // exact zero
  return it->second;
}

// ---- grid convention ----------------------------------------------------------

grid::GridSpec grid_for_eps(double eps, int depth, int slab_rows, int extra_rows) {
  if (!(eps > 0) || eps > 0.5) throw std::invalid_argument("width must lie in (0, 1/2]");
  if (depth < 0 || slab_rows < 1 || extra_rows < 0)
    throw std::invalid_argument("bad grid sizing request");
  GridSpec g;
  int nx = int(std::ceil(2.0 / eps - 1e-9));
  if (nx % 2) ++nx;
  g.nx = nx;
  g.dt = g.dx() * g.dx() / 2;
  const int ntk = int(std::floor(1.0 / g.dt + 1e-9));
  const int ht = int(std::floor(eps * eps / (2 * g.dt) + 0.5)) + 1;
  const long long rows = 2LL * (ht + 1) + (long long)depth * ntk + slab_rows + extra_rows + 4;
  g.horizon = double(rows - 1) * g.dt;
  g.validate();
  if (g.nt() < rows) g.horizon = double(rows) * g.dt;  // guard fp rounding
  return g;
}

int kernel_depth(const TreePtr& tau) {
  int d = 0;
  for (const Edge& e : tau->kids)
    d = std::max(d, e.noise > 0 ? 0 : 1 + kernel_depth(e.sub));
  return d;
}

namespace {

int max_noise_index(const TreePtr& t) {
  int m = 0;
  for (const Edge& e : t->kids)
    m = std::max(m, e.noise > 0 ? e.noise : max_noise_index(e.sub));
  return m;
}

void run_partitioned(int jobs, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || jobs <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  const int w = std::min(workers, jobs);
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (int t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < jobs; i += w) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

// ---- stationary estimates ------------------------------------------------------

MeanErr estimate_gminus(const TreePtr& tau, double eps, long long min_samples,
                        std::uint64_t seed, EstimateOptions opts) {
  const int m = std::max(opts.m, max_noise_index(tau));
  const int S = opts.slab_rows;
  const GridSpec g = grid_for_eps(eps, kernel_depth(tau), S);
  const long long per_field = (long long)S * g.nx;
  const int F = opts.fields > 0
                    ? opts.fields
                    : int(std::max<long long>(8, (min_samples + per_field - 1) / per_field));

  KernelCache cache(g);
  std::vector<double> batch(F, 0.0);
  run_partitioned(F, opts.workers, [&](int f) {
    const NoiseField nf = sample_noise(g, eps, m, mix_seed(seed, 0x5a, std::uint64_t(f)));
    LiftContext ctx(nf, cache);
    const Field val = lift_base_point(tau, ctx);
    batch[f] = grid::slab_mean(val, S);
  });
  MeanErr r = mean_stderr(batch);
  r.n = (long long)F * per_field;
  return r;
}

double quadrature_second_moment(const grid::GridSpec& g, double eps, MultiIndex k) {
  const Field K = grid::kernel_table(g, k);
  const Stencil rho = grid::mollifier(g, eps);
  const double dtdx = g.dt * g.dx();
  double acc = 0;
  for (int r = -rho.ht; r <= K.nt - 1 + rho.ht; ++r)
    for (int c = 0; c < g.nx; ++c) {
      double v = 0;
      for (int i = -rho.ht; i <= rho.ht; ++i) {
        const int rr = r - i;
        if (rr < 1 || rr >= K.nt) continue;
        for (int j = -rho.hx; j <= rho.hx; ++j)
          v += rho.at(i, j) * K.at(rr, ((c - j) % g.nx + g.nx) % g.nx);
      }
      v *= dtdx;
      acc += v * v;
    }
  return acc * dtdx;
}

// ---- renormalisation character ---------------------------------------------------

namespace {

// g(tau) through the twisted-antipode expansion: sum over forests of the
// product of per-factor stationary means, with independent streams per factor
// so the product/sum error propagation below is exact for independent terms.
MeanErr character_value(const TreePtr& tau, double eps, long long min_samples,
                        std::uint64_t seed, const EstimateOptions& opts) {
  const MinusElem expansion = twisted_antipode_minus(forest_of(tau), false);
  double mean = 0, var = 0;
  long long n = 0;
  int term = 0;
  for (const auto& [forest, coeff] : expansion.terms) {
    double pm = 1.0;   // product of means
    double pm2 = 1.0;  // product of (mean^2 + se^2)
    int fac = 0;
    for (const TreePtr& item : forest.items) {
      const MeanErr est = estimate_gminus(
          item, eps, min_samples, mix_seed(seed, std::uint64_t(term), std::uint64_t(fac)), opts);
      pm *= est.mean;
      pm2 *= est.mean * est.mean + est.se * est.se;
      n = n == 0 ? est.n : std::min(n, est.n);
      ++fac;
    }
    const double c = to_d(coeff);
    mean += c * pm;
    var += c * c * std::max(0.0, pm2 - pm * pm);
    ++term;
  }
  return {mean, std::sqrt(var), n};
}

}  // namespace

std::vector<CharEntry> bphz_character(const StructureIndex& index, double eps,
                                      long long min_samples, std::uint64_t seed,
                                      EstimateOptions opts) {
  std::vector<CharEntry> out;
  out.reserve(index.basis.size());
  int gi = 0;
  for (const auto& entry : index.basis) {
    if (!entry.in_W) continue;
    CharEntry e;
    e.tau = entry.t;
    e.deg = entry.deg;
    if (!entry.deg.negative()) {
      e.exact_zero = true;
    } else {
      e.value = character_value(entry.t, eps, min_samples,
                                mix_seed(seed, 0xC0DE, std::uint64_t(gi)), opts);
    }
    out.push_back(std::move(e));
    ++gi;
  }
  return out;
}

std::map<TreePtr, MeanErr, TreeLess> character_for_tree(const TreePtr& tau, double eps,
                                                        long long min_samples,
                                                        std::uint64_t seed,
                                                        EstimateOptions opts) {
  std::map<TreePtr, MeanErr, TreeLess> out;
  std::vector<TreePtr> legs;
  for (const auto& [ab, c] : coproduct_minus(tau, MinusTarget::Tree, false).terms) {
    (void)c;
    for (const TreePtr& item : ab.first.items)
      if (!out.count(item)) {
        out.emplace(item, MeanErr{});
        legs.push_back(item);
      }
  }
  int li = 0;
  for (const TreePtr& leg : legs) {
    out[leg] = character_value(leg, eps, min_samples, mix_seed(seed, 0x1e9, std::uint64_t(li)),
                               opts);
    ++li;
  }
  return out;
}

// ---- recentred pairings -----------------------------------------------------------

grid::Stencil test_function(const grid::GridSpec& g, double lambda) {
  g.validate();
  if (!(lambda > 0)) throw std::invalid_argument("scale must be positive");
  const double half_t = 0.3 * lambda * lambda;  // parabolic radius sqrt(.3)+.4 < 1
  const double half_x = 0.4 * lambda;
  if (half_t < 2 * g.dt || half_x < 2 * g.dx())
    throw std::invalid_argument("scale below the grid resolution");
  const int ht = int(std::ceil(half_t / g.dt - 0.5 - 1e-12));
  const int hx = int(std::ceil(half_x / g.dx() - 0.5 - 1e-12));
  if (2 * hx + 1 > g.nx) throw std::invalid_argument("test function wider than the circle");

  auto bump = [](double u) {
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
  s.dx = g.dx();
  s.w.assign(std::size_t(2 * ht + 1) * (2 * hx + 1), 0.0);
  // quadrant fill keeps the mirrored cells bit-identical
  for (int i = 0; i <= ht; ++i)
    for (int j = 0; j <= hx; ++j) {
      double avg = 0;
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 4; ++c) {
          const double t = (i + 0.5 * gl_x[a]) * g.dt;
          const double x = (j + 0.5 * gl_x[c]) * g.dx();
          avg += gl_w[a] * gl_w[c] * bump(t / (2 * half_t)) * bump(x / (2 * half_x));
        }
      avg /= 4;
      s.at(i, j) = s.at(-i, j) = s.at(i, -j) = s.at(-i, -j) = avg;
    }
  double mass = 0;
  for (double u : s.w) mass += u;
  mass *= g.dt * g.dx();
  for (double& u : s.w) u /= mass;
  return s;
}

namespace {

// Jets of the recentred model. Each coefficient of (zbar - z)^alpha is a sum
// of separable terms a(zbar) * b(z); the base-point factors b appear when a
// positive-degree kernel symbol has its Taylor polynomial subtracted.
struct HatTerm {
  Field a;
  std::optional<Field> b;
};
using HatJet = std::map<MultiIndex, std::vector<HatTerm>>;

void hat_add(HatJet& acc, MultiIndex alpha, HatTerm&& t) {
  acc[alpha].push_back(std::move(t));
}

HatJet hat_mul(const HatJet& u, const HatJet& w) {
  HatJet out;
  for (const auto& [au, tu] : u)
    for (const auto& [aw, tw] : w)
      for (const HatTerm& x : tu)
        for (const HatTerm& y : tw) {
          HatTerm t{field_mul(x.a, y.a), std::nullopt};
          if (x.b && y.b)
            t.b = field_mul(*x.b, *y.b);
          else if (x.b)
            t.b = *x.b;
          else if (y.b)
            t.b = *y.b;
          hat_add(out, au + aw, std::move(t));
        }
  return out;
}

struct HatContext {
  const NoiseField* noise = nullptr;
  KernelCache* kernels = nullptr;
  std::map<TreePtr, HatJet, TreeLess> memo;
};

std::vector<MultiIndex> taylor_range(const Degree& d) {
  std::vector<MultiIndex> out;
  for (long long w = 0; w <= 4; ++w) {
    if (!(Degree{Rational(w), 0} < d)) break;
    for (long long kt = 0; 2 * kt <= w; ++kt) out.push_back({kt, w - 2 * kt});
  }
  return out;
}

const HatJet& hat_jet(const TreePtr& t, HatContext& ctx) {
  auto hit = ctx.memo.find(t);
  if (hit != ctx.memo.end()) return hit->second;

  const GridSpec& g = ctx.noise->g;
  HatJet j;
  hat_add(j, t->n, HatTerm{field_ones(g), std::nullopt});
  for (const Edge& e : t->kids) {
    HatJet je;
    if (e.noise > 0) {
      if (!e.k.is_zero())
        throw std::runtime_error("derivatives of the driving noise are not modelled");
      if (e.noise > int(ctx.noise->xi.size()))
        throw std::runtime_error("noise index exceeds the sampled family");
      hat_add(je, {0, 0}, HatTerm{ctx.noise->xi[e.noise - 1], std::nullopt});
    } else {
      const HatJet& js = hat_jet(e.sub, ctx);
      for (const auto& [alpha, terms] : js)
        for (const MultiIndex& beta : indices_below(alpha)) {
          const double cb = to_d(mi_binom(alpha, beta));
          for (const HatTerm& term : terms) {
            Field conv = grid::conv_fft(term.a, ctx.kernels->get(e.k, beta));
            if (cb != 1.0)
              for (double& u : conv.v) u *= cb;
            hat_add(je, alpha - beta, HatTerm{std::move(conv), term.b});
          }
        }
      // positive-degree symbols get their Taylor polynomial at the base
      // point subtracted (negative ones stay canonical)
      const Degree d = edge_degree(e) + deg_plus(*e.sub);
      if (d.positive()) {
        for (const MultiIndex& ell : taylor_range(d)) {
          // coefficient field of (zbar-z)^ell: -(1/ell!) D^{k+ell}-convolution
          // of the argument, evaluated on the diagonal zbar = z
          Field diag;
          bool first = true;
          for (const auto& [alpha, terms] : js)
            for (const HatTerm& term : terms) {
              Field part = grid::conv_fft(term.a, ctx.kernels->get(e.k + ell, alpha));
              if (term.b) part = field_mul(part, *term.b);
              if (first) {
                diag = std::move(part);
                first = false;
              } else {
                field_axpy(diag, 1.0, part);
              }
            }
          const double c = -1.0 / to_d(mi_factorial(ell));
          for (double& u : diag.v) u *= c;
          hat_add(je, ell, HatTerm{field_ones(g), std::move(diag)});
        }
      }
    }
    j = hat_mul(j, je);
  }
  auto [pos, inserted] = ctx.memo.emplace(t, std::move(j));
  (void)inserted;
  return pos->second;
}

// <Pihat_z tau, phi_z^lambda> as a field over base points z
Field hat_pairing(const HatJet& j, const GridSpec& g,
                  const std::function<const Stencil&(MultiIndex)>& phi_weighted) {
  Field out = grid::make_field(g);
  for (const auto& [alpha, terms] : j) {
    const Stencil& ph = phi_weighted(alpha);
    for (const HatTerm& term : terms) {
      Field c = grid::corr_stencil_fft(term.a, ph);
      if (term.b) c = field_mul(c, *term.b);
      field_axpy(out, 1.0, c);
    }
  }
  return out;
}

}  // namespace

std::vector<ScalingPoint> scaling_run(const TreePtr& tau, const std::vector<double>& lambdas,
                                      double eps, bool renormalised, long long min_samples,
                                      std::uint64_t seed, EstimateOptions opts) {
  if (lambdas.empty()) throw std::invalid_argument("no scales requested");
  const int m = std::max(opts.m, max_noise_index(tau));
  const int S = opts.slab_rows;
  const int depth = kernel_depth(tau);

  // size the grid so the widest test function fits next to the slab
  const GridSpec probe = grid_for_eps(eps, 0, 1);
  double lmax = 0;
  for (double l : lambdas) lmax = std::max(lmax, l);
  const int phi_rows = int(std::ceil(0.3 * lmax * lmax / probe.dt)) + 2;
  const GridSpec g = grid_for_eps(eps, depth, S, 2 * phi_rows);
  for (double l : lambdas) (void)test_function(g, l);  // validate resolution up front

  // the renormalised combination sum_sigma c_sigma Pihat(sigma), with the
  // character estimated on an independent stream; a copy shifted by one
  // standard error tracks how that uncertainty moves the coefficients
  ValComb<double> comb, comb_hi;
  if (renormalised) {
    const auto ch = character_for_tree(tau, eps, min_samples, mix_seed(seed, 0xC4A7), opts);
    TreeFn<double> gf = [&ch](const TreePtr& t) {
      auto it = ch.find(t);
      return it == ch.end() ? 0.0 : it->second.mean;
    };
    TreeFn<double> gf_hi = [&ch](const TreePtr& t) {
      auto it = ch.find(t);
      return it == ch.end() ? 0.0 : it->second.mean + it->second.se;
    };
    comb = action_renorm<double>(gf, tau, false);
    comb_hi = action_renorm<double>(gf_hi, tau, false);
  } else {
    comb.emplace(tau, 1.0);
    comb_hi = comb;
  }
  std::vector<TreePtr> sigmas;
  for (const auto& [sig, c] : comb) {
    (void)c;
    sigmas.push_back(sig);
  }

  const long long per_field = (long long)S * g.nx;
  const int F = opts.fields > 0
                    ? opts.fields
                    : int(std::max<long long>(8, (min_samples + per_field - 1) / per_field));

  KernelCache cache(g);
  std::mutex phi_mu;
  std::map<std::pair<int, MultiIndex>, std::unique_ptr<Stencil>> phis;
  auto phi_for = [&](int li, MultiIndex alpha) -> const Stencil& {
    std::lock_guard<std::mutex> lock(phi_mu);
    const auto key = std::make_pair(li, alpha);
    auto it = phis.find(key);
    if (it == phis.end()) {
      Stencil base = test_function(g, lambdas[li]);
      if (!alpha.is_zero())
        for (int i = -base.ht; i <= base.ht; ++i)
          for (int j = -base.hx; j <= base.hx; ++j) {
            double w = 1;
            for (long long q = 0; q < alpha.kt; ++q) w *= i * g.dt;
            for (long long q = 0; q < alpha.kx; ++q) w *= j * g.dx();
            base.at(i, j) *= w;
          }
      it = phis.emplace(key, std::make_unique<Stencil>(std::move(base))).first;
    }
    return *it->second;
  };

  const int L = int(lambdas.size());
  // batch statistics: [lambda][field]
  std::vector<std::vector<double>> mean_b(L, std::vector<double>(F, 0.0));
  std::vector<std::vector<double>> sq_b(L, std::vector<double>(F, 0.0));
  // per-component means for the coefficient sensitivity: [sigma][lambda][field]
  std::vector<std::vector<std::vector<double>>> comp_b(
      sigmas.size(), std::vector<std::vector<double>>(L, std::vector<double>(F, 0.0)));

  run_partitioned(F, opts.workers, [&](int f) {
    const NoiseField nf = sample_noise(g, eps, m, mix_seed(seed, 0x5ca1e, std::uint64_t(f)));
    HatContext ctx;
    ctx.noise = &nf;
    ctx.kernels = &cache;
    for (int li = 0; li < L; ++li) {
      Field acc = grid::make_field(g);
      for (std::size_t si = 0; si < sigmas.size(); ++si) {
        const HatJet& j = hat_jet(sigmas[si], ctx);
        const Field p = hat_pairing(j, g, [&](MultiIndex a) -> const Stencil& {
          return phi_for(li, a);
        });
        comp_b[si][li][f] = grid::slab_mean(p, S);
        field_axpy(acc, comb.at(sigmas[si]), p);
      }
      mean_b[li][f] = grid::slab_mean(acc, S);
      sq_b[li][f] = slab_mean_sq(acc, S);
    }
  });

  std::vector<ScalingPoint> out(L);
  for (int li = 0; li < L; ++li) {
    out[li].lambda = lambdas[li];
    out[li].pairing_mean = mean_stderr(mean_b[li]);
    out[li].second_moment = mean_stderr(sq_b[li]);
    out[li].pairing_mean.n = out[li].second_moment.n = (long long)F * per_field;
    // fold the character uncertainty into the mean's error bar
    double char_se = 0;
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
      const double dc = comb_hi.at(sigmas[si]) - comb.at(sigmas[si]);
      if (dc == 0.0) continue;
      char_se += std::abs(dc * mean_stderr(comp_b[si][li]).mean);
    }
    out[li].pairing_mean.se = std::sqrt(out[li].pairing_mean.se * out[li].pairing_mean.se +
                                        char_se * char_se);
  }
  return out;
}

double fitted_slope(const std::vector<ScalingPoint>& pts) {
  std::vector<double> x, y;
  for (const auto& p : pts) {
    if (!(p.second_moment.mean > 0))
      throw std::invalid_argument("second moments must be positive to fit a slope");
    x.push_back(std::log2(p.lambda));
    y.push_back(std::log2(p.second_moment.mean));
  }
  return least_squares_slope(x, y);
}

}  // namespace loopren::bphz
