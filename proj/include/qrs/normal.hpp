#pragma once

// Univariate and bivariate standard normal distribution functions.

namespace qrs::normal {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrt2Pi = 2.50662827463100050242;

/// Spread between the 0.75 and 0.25 standard normal quantiles.
inline constexpr double kQuartileSpread = 1.3489795003921634;

double pdf(double x);
double cdf(double x);

/// Inverse of cdf. Acklam's rational approximation followed by one Halley
/// step, which brings the relative error to about 1e-15 over (0,1).
/// Returns -inf / +inf at 0 / 1.
double quantile(double p);

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
/// Genz's implementation of the Drezner-Wesolowsky method (Gauss-Legendre
/// rules with 6/12/20 nodes), absolute error below 1e-14.
double bivariate_cdf(double h, double k, double rho);

/// Density of the standard bivariate normal.
double bivariate_pdf(double h, double k, double rho);

}  // namespace qrs::normal
