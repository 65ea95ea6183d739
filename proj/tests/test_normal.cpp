#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qrs/normal.hpp"
#include "qrs/rng.hpp"

using namespace qrs;

// Reference values from 30-digit quadrature.
TEST_CASE("univariate values") {
  CHECK(normal::cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  CHECK(normal::cdf(-3.5) == doctest::Approx(0.00023262907903552502).epsilon(1e-13));
  CHECK(normal::quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal::quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-13));
  CHECK(std::isinf(normal::quantile(0.0)));
  CHECK(std::isinf(normal::quantile(1.0)));
  CHECK(normal::pdf(0.0) == doctest::Approx(1.0 / normal::kSqrt2Pi));
}

TEST_CASE("quantile inverts cdf") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double p = rng.uniform();
    CHECK(normal::cdf(normal::quantile(p)) == doctest::Approx(p).epsilon(1e-13));
  }
  CHECK(normal::kQuartileSpread == doctest::Approx(normal::quantile(0.75) - normal::quantile(0.25)).epsilon(1e-15));
}

TEST_CASE("bivariate cdf") {
  CHECK(normal::bivariate_cdf(0.5, -0.2, 0.3) == doctest::Approx(0.332026254420182256).epsilon(1e-13));
  CHECK(normal::bivariate_cdf(-1.5, 2.0, -0.9) == doctest::Approx(0.046522614539180648).epsilon(1e-12));
  CHECK(normal::bivariate_cdf(1.0, 1.0, 0.95) == doctest::Approx(0.810819512969196195).epsilon(1e-13));
  CHECK(normal::bivariate_cdf(0.0, 0.0, 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(normal::bivariate_cdf(0.7, -0.4, 0.0) ==
        doctest::Approx(normal::cdf(0.7) * normal::cdf(-0.4)).epsilon(1e-15));
}

TEST_CASE("bivariate density integrates to the cdf along rho") {
  // d/drho Phi2(h, k; rho) = phi2(h, k; rho).
  const double h = 0.3, k = -0.8, rho = 0.4, d = 1e-5;
  const double fd = (normal::bivariate_cdf(h, k, rho + d) - normal::bivariate_cdf(h, k, rho - d)) / (2 * d);
  CHECK(fd == doctest::Approx(normal::bivariate_pdf(h, k, rho)).epsilon(1e-7));
}
