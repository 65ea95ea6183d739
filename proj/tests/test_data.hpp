#pragma once

// Small synthetic datasets built directly in test code.

#include <cmath>
#include <cstdint>
#include <vector>

#include "copula_oracle.hpp"
#include "qrs/dataset.hpp"
#include "qrs/rng.hpp"

namespace testdata {

inline qrs::Schema schema(std::size_t p) {
  qrs::Schema s;
  s.outcome_col = "y";
  s.selection_col = "s";
  s.group_col = "d";
  s.instrument_col = "z1";
  for (std::size_t j = 0; j < p; ++j) s.covariate_cols.push_back("x" + std::to_string(j + 1));
  return s;
}

struct Rows {
  std::vector<double> y, z1, x1;
  std::vector<std::uint8_t> s, d;

  qrs::Dataset build() const {
    qrs::RowMatrix x(static_cast<Eigen::Index>(y.size()), 2);
    for (std::size_t i = 0; i < y.size(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = 1.0;
      x(static_cast<Eigen::Index>(i), 1) = x1[i];
    }
    return qrs::Dataset(schema(1), y, s, d, z1, x);
  }
};

// Probit participation on (1, z1, x) with Gaussian-copula latent errors and
// y = b0 + b1 x + sigma Phi^{-1}(U); written without library samplers.
struct Design {
  double g0 = 0.2, gz = -0.4, gx = 0.8;
  double b0 = 1.0, b1 = 0.5, sigma = 1.0;
  double rho = 0.0;
};

inline void append_group(Rows& r, int d, const Design& g, std::size_t n, qrs::Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = std::floor(4.0 * rng.uniform());
    const double x = 2.0 * rng.uniform();
    const auto [u, v] = oracle::sample_gaussian(g.rho, rng);
    const double pi = oracle::std_normal_cdf(g.g0 + g.gz * z1 + g.gx * x);
    const bool s = v < pi;
    r.z1.push_back(z1);
    r.x1.push_back(x);
    r.s.push_back(s);
    r.d.push_back(static_cast<std::uint8_t>(d));
    // Inverse normal CDF by bisection keeps this independent of the library.
    double lo = -40, hi = 40;
    for (int k = 0; k < 64; ++k) {
      const double mid = 0.5 * (lo + hi);
      (oracle::std_normal_cdf(mid) < u ? lo : hi) = mid;
    }
    r.y.push_back(s ? g.b0 + g.b1 * x + g.sigma * 0.5 * (lo + hi) : 0.0);
  }
}

inline qrs::Dataset two_groups(const Design& g0, const Design& g1, std::size_t n, std::uint64_t seed) {
  qrs::Rng rng(seed);
  Rows r;
  append_group(r, 0, g0, n, rng);
  append_group(r, 1, g1, n, rng);
  return r.build();
}

}  // namespace testdata
