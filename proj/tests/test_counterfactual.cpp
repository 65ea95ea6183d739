#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cf_fixture.hpp"
#include "copula_oracle.hpp"
#include "qrs/counterfactual.hpp"
#include "qrs/error.hpp"
#include "test_data.hpp"

using namespace qrs;
using namespace cffix;

TEST_CASE("index and statistic labels") {
  CHECK(CfIndex::parse("1011") == CfIndex{1, 0, 1, 1});
  CHECK(CfIndex{0, 1, 1, 0}.label() == "0110");
  CHECK_THROWS_AS(CfIndex::parse("10a1"), Error);
  CHECK_THROWS_AS(CfIndex::parse("101"), Error);
  CHECK_THROWS_AS((CfIndex{2, 0, 0, 0}.validate()), Error);

  CHECK(CfStat::parse("mean_u") == stat(CfKind::mean_u));
  CHECK(CfStat::parse("quantile_population@0.25") == stat(CfKind::quantile_population, 0.25));
  CHECK(stat(CfKind::cdf_participants, 1.5).label() == "cdf_participants@1.5");
  CHECK_THROWS_AS(CfStat::parse("quantile_population"), Error);
  CHECK_THROWS_AS(CfStat::parse("mean_population@0.5"), Error);
  CHECK_THROWS_AS(CfStat::parse("cdf_population@x"), Error);
  CHECK_THROWS_AS(CfStat::parse("median"), Error);
  for (CfKind k : {CfKind::mean_participants, CfKind::quantile_population, CfKind::potential_cdf}) {
    CHECK(parse_cf_kind(to_string(k)) == k);
  }
}

TEST_CASE("frozen values on a hand-built fit pair") {
  Fixture fx;
  CfEngine e(fx.fits, fx.ds);
  // Independent high-precision evaluation of the grid formulas.
  const double mp[] = {1.6354173836969378, 1.5811014086373387, 1.4162180429170611, 1.6537351819278471,
                       1.7602436849893187};
  const double mpop[] = {0.86197222814472994, 1.1139434149285217, 0.97874848374135692, 1.1432490735119225,
                         0.76198885401683407};
  const double cdf1[] = {0.49841354867076243, 0.5041892953642754, 0.49644646793549922, 0.43017898303671297,
                         0.35784980363472963};
  const double cdfpop[] = {0.76020668356928821, 0.66832986650039126, 0.67137361528604655, 0.62363534193766373,
                           0.75067312170632072};
  const double q50[] = {1.54, 1.5, 1.5075, 1.6975, 1.9075};
  const double qpop70[] = {1.27, 1.6, 1.6, 1.8, 0.9275};
  for (int a = 0; a < 5; ++a) {
    CAPTURE(kPath[a]);
    const CfIndex idx = CfIndex::parse(kPath[a]);
    CHECK(e.value(idx, stat(CfKind::mean_participants)) == doctest::Approx(mp[a]).epsilon(1e-12));
    CHECK(e.value(idx, stat(CfKind::mean_population)) == doctest::Approx(mpop[a]).epsilon(1e-12));
    CHECK(e.value(idx, stat(CfKind::cdf_participants, 1.5)) == doctest::Approx(cdf1[a]).epsilon(1e-12));
    CHECK(e.value(idx, stat(CfKind::cdf_population, 1.5)) == doctest::Approx(cdfpop[a]).epsilon(1e-12));
    CHECK(e.value(idx, stat(CfKind::quantile_participants, 0.5)) == doctest::Approx(q50[a]).epsilon(1e-12));
    CHECK(e.value(idx, stat(CfKind::quantile_population, 0.7)) == doctest::Approx(qpop70[a]).epsilon(1e-12));
    // Non-participation mass exceeds 0.3 for every anchor.
    CHECK(e.value(idx, stat(CfKind::quantile_population, 0.3)) == 0.0);
  }
  CHECK(e.mean_u(1, 1, 1) == doctest::Approx(0.37376758929555082).epsilon(1e-12));
  CHECK(e.mean_u(0, 1, 1) == doctest::Approx(0.40686485313077834).epsilon(1e-12));
  CHECK(e.mean_u(0, 0, 1) == doctest::Approx(0.52336520238140349).epsilon(1e-12));
  CHECK(e.mean_u(0, 0, 0) == doctest::Approx(0.58932432321604421).epsilon(1e-12));
  CHECK(e.mean_propensity(1, 1) == doctest::Approx(0.54).epsilon(1e-14));
  CHECK(e.mean_propensity(0, 1) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(e.mean_propensity(0, 0) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(potential_stat(fx.fits, fx.ds, 1, 1, stat(CfKind::potential_mean)) == doctest::Approx(1.89).epsilon(1e-12));
  CHECK(potential_stat(fx.fits, fx.ds, 0, 1, stat(CfKind::potential_mean)) == doctest::Approx(1.71).epsilon(1e-12));
  CHECK(potential_stat(fx.fits, fx.ds, 0, 0, stat(CfKind::potential_mean)) ==
        doctest::Approx(1.501125).epsilon(1e-12));

  // Free functions agree with the engine bit for bit.
  const CfIndex idx{0, 1, 0, 1};
  CHECK(cf_mean_participants(fx.fits, fx.ds, idx) == e.mean(idx, CfTarget::participants));
  CHECK(cf_mean_population(fx.fits, fx.ds, idx) == e.mean(idx, CfTarget::population));
  CHECK(cf_cdf_participants(fx.fits, fx.ds, idx, 1.2) == e.value(idx, stat(CfKind::cdf_participants, 1.2)));
  CHECK(cf_cdf_population(fx.fits, fx.ds, idx, 1.2) == e.value(idx, stat(CfKind::cdf_population, 1.2)));
  CHECK(cf_quantile(fx.fits, fx.ds, idx, 0.4, CfTarget::population) ==
        e.value(idx, stat(CfKind::quantile_population, 0.4)));
  CHECK(cf_mean_u(fx.fits, fx.ds, idx) == e.mean_u(0, 0, 1));
  CHECK(cf_mean_propensity(fx.fits, fx.ds, idx) == e.mean_propensity(0, 1));
  CHECK_THROWS_AS(potential_stat(fx.fits, fx.ds, 0, 1, stat(CfKind::mean_participants)), Error);
  CHECK_THROWS_AS(cf_quantile(fx.fits, fx.ds, idx, 0.4, CfTarget::potential), Error);
}

TEST_CASE("constant quantile functions") {
  Fixture fx;
  const auto c = [](double) { return std::pair{2.5, 0.0}; };
  std::vector<double> half(9, 0.5);
  fx.fits[0] = make_fit(0, CopulaSpec::independence(), fx.grid, c, half);
  fx.fits[1] = make_fit(1, CopulaSpec::independence(), fx.grid, c, half);
  CfEngine e(fx.fits, fx.ds);
  const double inner = 1.0 - 2.0 * fx.grid.eps;
  for (const char* lab : kPath) {
    const CfIndex idx = CfIndex::parse(lab);
    CHECK(e.mean(idx, CfTarget::participants) == doctest::Approx(2.5 * inner).epsilon(1e-14));
    CHECK(e.mean(idx, CfTarget::population) == doctest::Approx(0.5 * 2.5 * inner).epsilon(1e-14));
    CHECK(e.mean(idx, CfTarget::potential) == doctest::Approx(2.5 * inner).epsilon(1e-14));
    CHECK(e.mean_propensity(idx.h, idx.m) == doctest::Approx(0.5).epsilon(1e-15));
    // Independence: grid midpoints weighted by du.
    CHECK(e.mean_u(idx.h, idx.l, idx.m) == doctest::Approx(0.5 * inner).epsilon(1e-12));
    // Population CDF at zero: the non-participation mass plus the floor.
    CHECK(e.value(idx, stat(CfKind::cdf_population, 0.0)) == doctest::Approx(0.5 + fx.grid.eps).epsilon(1e-14));
    CHECK(e.value(idx, stat(CfKind::cdf_population, -1e-9)) == 0.0);
    CHECK(e.value(idx, stat(CfKind::cdf_participants, 2.4)) == fx.grid.eps);
    CHECK(e.value(idx, stat(CfKind::cdf_participants, 2.5)) == doctest::Approx(1.0 - fx.grid.eps).epsilon(1e-14));
    CHECK(e.value(idx, stat(CfKind::quantile_population, 0.5)) == 0.0);
    CHECK(e.value(idx, stat(CfKind::quantile_population, 0.6)) == 2.5);
  }
}

TEST_CASE("all participants reduce the population target to the participant target") {
  Fixture fx;
  std::vector<double> ones(9, 1.0);
  fx.fits[0].pi_hat = ones;
  fx.fits[1].pi_hat = ones;
  fx.fits[0].copula = CopulaSpec::independence();
  fx.fits[1].copula = CopulaSpec::independence();
  CfEngine e(fx.fits, fx.ds);
  for (const char* lab : kPath) {
    const CfIndex idx = CfIndex::parse(lab);
    CHECK(e.mean(idx, CfTarget::population) == doctest::Approx(e.mean(idx, CfTarget::participants)).epsilon(1e-14));
    for (double y : {0.5, 1.0, 2.0, 3.5}) {
      // The population floor is booked at zero, so both CDFs agree for y >= 0.
      CHECK(e.value(idx, stat(CfKind::cdf_population, y)) ==
            doctest::Approx(e.value(idx, stat(CfKind::cdf_participants, y))).epsilon(1e-14));
    }
  }
}

TEST_CASE("independence copula makes participant statistics invariant to the propensity") {
  Fixture fx;
  fx.fits[0].copula = CopulaSpec::independence();
  CfEngine e(fx.fits, fx.ds);
  for (int h = 0; h < 2; ++h) {
    for (int k = 0; k < 2; ++k) {
      const CfIndex a{h, k, 0, 0}, b{h, k, 0, 1};
      CHECK(e.mean(a, CfTarget::participants) == e.mean(b, CfTarget::participants));
      CHECK(e.mean_u(h, 0, 0) == e.mean_u(h, 0, 1));
      for (double y : {0.3, 1.1, 2.2}) {
        CHECK(e.value(a, stat(CfKind::cdf_participants, y)) == e.value(b, stat(CfKind::cdf_participants, y)));
      }
      for (double t : {0.1, 0.5, 0.9}) {
        CHECK(e.value(a, stat(CfKind::quantile_participants, t)) ==
              e.value(b, stat(CfKind::quantile_participants, t)));
      }
    }
  }
}

TEST_CASE("cdf monotonicity and quantile duality") {
  Fixture fx;
  CfEngine e(fx.fits, fx.ds);
  for (const char* lab : kPath) {
    const CfIndex idx = CfIndex::parse(lab);
    for (CfTarget t : {CfTarget::participants, CfTarget::population, CfTarget::potential}) {
      const CfDistribution& dist = e.distribution(idx, t);
      double prev = -1.0;
      for (int q = 0; q < 200; ++q) {
        const double y = -0.5 + 5.0 * q / 199.0;
        const double f = dist.cdf(y);
        CHECK(f >= prev);
        prev = f;
      }
      const auto c = dist.candidates();
      for (double tau = 0.06; tau < 0.95; tau += 0.01) {
        const double q = dist.quantile(tau);
        // Beyond the top atom the largest candidate is returned.
        if (dist.cdf(c.back()) < tau) {
          CHECK(q == c.back());
          continue;
        }
        CHECK(dist.cdf(q) >= tau);
        // Nothing smaller among the candidates reaches tau.
        const auto it = std::lower_bound(c.begin(), c.end(), q);
        if (it != c.begin()) CHECK(dist.cdf(*(it - 1)) < tau);
      }
      for (double y : dist.candidates()) {
        const double f = dist.cdf(y);
        if (f > fx.grid.eps && f < 1.0 - fx.grid.eps) CHECK(dist.quantile(f) <= y);
      }
      CHECK_THROWS_AS(dist.quantile(fx.grid.eps), Error);
      CHECK_THROWS_AS(dist.quantile(1.0 - fx.grid.eps), Error);
    }
  }
  try {
    e.value({1, 1, 1, 1}, stat(CfKind::quantile_participants, 0.01));
    FAIL("expected a trimming error");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::trimming);
  }
}

TEST_CASE("weights act as replication counts") {
  Fixture fx;
  // Doubling row 2 by weight equals duplicating it.
  std::vector<double> w(9, 1.0);
  w[2] = 2.0;
  CfOptions o;
  o.weights = w;
  CfEngine weighted(fx.fits, fx.ds, o);

  testdata::Rows r;
  const double xs[] = {0.1, 0.5, 0.9, 1.3, 1.7, 0.2, 0.8, 1.4, 2.0, 0.9};
  for (int i = 0; i < 10; ++i) {
    r.y.push_back(1.0);
    r.s.push_back(1);
    r.d.push_back(i < 5 || i == 9 ? 0 : 1);
    r.z1.push_back(i % 3);
    r.x1.push_back(xs[i]);
  }
  const Dataset dup = r.build();
  FitPair fits = fx.fits;
  for (auto& f : fits) f.pi_hat.push_back(f.pi_hat[2]);
  CfEngine copied(fits, dup);
  for (const char* lab : kPath) {
    const CfIndex idx = CfIndex::parse(lab);
    CHECK(weighted.mean(idx, CfTarget::participants) ==
          doctest::Approx(copied.mean(idx, CfTarget::participants)).epsilon(1e-13));
    CHECK(weighted.mean(idx, CfTarget::population) ==
          doctest::Approx(copied.mean(idx, CfTarget::population)).epsilon(1e-13));
    CHECK(weighted.value(idx, stat(CfKind::quantile_population, 0.6)) ==
          copied.value(idx, stat(CfKind::quantile_population, 0.6)));
  }
  CHECK(weighted.mean_u(0, 1, 0) == doctest::Approx(copied.mean_u(0, 1, 0)).epsilon(1e-13));

  std::vector<double> bad(3, 1.0);
  o.weights = bad;
  CHECK_THROWS_AS(CfEngine(fx.fits, fx.ds, o), Error);
}

TEST_CASE("rearrangement sorts crossing quantiles") {
  Fixture fx;
  // Decreasing in tau for x > 0.5: crossing by construction.
  fx.fits[1] = make_fit(1, CopulaSpec::frank(3.0), fx.grid, [](double t) { return std::pair{t, 1.0 - 2.0 * t}; },
                        fx.fits[1].pi_hat);
  CfOptions o;
  o.rearrange = true;
  CfEngine plain(fx.fits, fx.ds), sorted(fx.fits, fx.ds, o);
  // Potential means use uniform weights, so sorting leaves them unchanged.
  CHECK(sorted.mean({1, 1, 0, 0}, CfTarget::potential) ==
        doctest::Approx(plain.mean({1, 1, 0, 0}, CfTarget::potential)).epsilon(1e-13));
  CHECK(sorted.mean({1, 1, 1, 1}, CfTarget::participants) != plain.mean({1, 1, 1, 1}, CfTarget::participants));
  const auto& d = sorted.distribution({1, 1, 1, 1}, CfTarget::participants);
  CHECK(d.cdf(10.0) == doctest::Approx(plain.distribution({1, 1, 1, 1}, CfTarget::participants).cdf(10.0)));
}

TEST_CASE("incompatible fits are rejected") {
  Fixture fx;
  FitPair f = fx.fits;
  f[1].grid = TauGrid::make(0.05, 0.1);
  f[1].beta = f[1].beta.topRows(static_cast<Eigen::Index>(f[1].grid.size()));
  CHECK_THROWS_AS(CfEngine(f, fx.ds), Error);
  f = fx.fits;
  std::swap(f[0], f[1]);
  CHECK_THROWS_AS(CfEngine(f, fx.ds), Error);
  f = fx.fits;
  f[0].pi_hat.pop_back();
  CHECK_THROWS_AS(CfEngine(f, fx.ds), Error);
  try {
    f = fx.fits;
    f[0].grid = TauGrid::make(0.04, 0.05);
    CfEngine e(f, fx.ds);
    FAIL("expected a config error");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::config);
  }
}

TEST_CASE("positive selection raises the mean rank of participants") {
  // Frank theta < 0 pairs small V with large U.
  Fixture fx;
  std::vector<double> half(9, 0.5);
  fx.fits[0].pi_hat = half;
  fx.fits[0].copula = CopulaSpec::frank(-5.0);
  CfEngine e(fx.fits, fx.ds);
  const double est = e.mean_u(0, 0, 0);
  CHECK(est > 0.5);

  // Monte Carlo of E[U 1(eps <= U <= 1 - eps) | V <= 1/2] from an independent sampler.
  Rng rng(2024);
  const int n = 400000;
  double sum = 0.0, sum2 = 0.0;
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    const auto [u, v] = oracle::sample_frank(-5.0, rng);
    if (v > 0.5) continue;
    const double val = u >= 0.05 && u <= 0.95 ? u : 0.0;
    sum += val;
    sum2 += val * val;
    ++kept;
  }
  const double m = sum / kept;
  const double se = std::sqrt((sum2 / kept - m * m) / kept);
  // The grid attributes each cell to its midpoint; the cell error is O(step^2).
  CHECK(std::abs(est - m) < 4.0 * se + 2e-3);
}
