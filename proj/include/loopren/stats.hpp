#pragma once
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace loopren {

// Ordinary least-squares slope of y against x.
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("least_squares_slope needs at least two paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(x.size());
  my /= double(y.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("least_squares_slope needs distinct abscissae");
  return sxy / sxx;
}

struct MeanErr {
  double mean = 0;
  double se = 0;  // standard error of the mean
  long long n = 0;
};

inline MeanErr mean_stderr(const std::vector<double>& v) {
  MeanErr r;
  r.n = (long long)v.size();
  if (v.empty()) return r;
  double s = 0;
  for (double u : v) s += u;
  r.mean = s / double(v.size());
  if (v.size() < 2) return r;
  double q = 0;
  for (double u : v) q += (u - r.mean) * (u - r.mean);
  r.se = std::sqrt(q / (double(v.size()) * double(v.size() - 1)));
  return r;
}

}  // namespace loopren
