#include "qrs/copula.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "qrs/error.hpp"
#include "qrs/normal.hpp"

namespace qrs {

std::string_view to_string(CopulaFamily family) {
  switch (family) {
    case CopulaFamily::independence: return "independence";
    case CopulaFamily::frank: return "frank";
    case CopulaFamily::gaussian: return "gaussian";
  }
  return "unknown";
}

CopulaFamily parse_copula_family(std::string_view name) {
  if (name == "independence") return CopulaFamily::independence;
  if (name == "frank") return CopulaFamily::frank;
  if (name == "gaussian") return CopulaFamily::gaussian;
  throw Error(ErrorCode::config, "unknown copula family '" + std::string(name) + "'");
}

CopulaSpec CopulaSpec::frank(double theta) {
  if (!std::isfinite(theta) || std::abs(theta) > kFrankCap) {
    throw Error(ErrorCode::domain, "Frank parameter must satisfy |theta| <= 50, got " +
                                       std::to_string(theta));
  }
  return {CopulaFamily::frank, theta};
}

CopulaSpec CopulaSpec::gaussian(double rho) {
  if (!std::isfinite(rho) || std::abs(rho) >= kGaussianCap) {
    throw Error(ErrorCode::domain,
                "Gaussian correlation must satisfy |rho| < 0.995, got " + std::to_string(rho));
  }
  return {CopulaFamily::gaussian, rho};
}

CopulaSpec CopulaSpec::make(CopulaFamily family, double theta) {
  switch (family) {
    case CopulaFamily::independence: return independence();
    case CopulaFamily::frank: return frank(theta);
    case CopulaFamily::gaussian: return gaussian(theta);
  }
  throw Error(ErrorCode::internal, "unhandled copula family");
}

bool CopulaSpec::behaves_independent() const noexcept {
  switch (family_) {
    case CopulaFamily::independence: return true;
    case CopulaFamily::frank: return std::abs(theta_) < kFrankIndependenceBand;
    case CopulaFamily::gaussian: return theta_ == 0.0;
  }
  return true;
}

namespace {

void check_unit(double u, double v, const char* where) {
  if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::domain, std::string(where) + ": arguments must lie in [0,1], got (" +
                                       std::to_string(u) + ", " + std::to_string(v) + ")");
  }
}

// Frank pieces. With a = expm1(-theta u), c = expm1(-theta v), b = expm1(-theta):
//   C = -log1p(a c / b) / theta.
struct FrankConstants {
  double theta;
  double b;
};

inline double frank_cdf_core(const FrankConstants& k, double a, double c) {
  return -std::log1p(a * c / k.b) / k.theta;
}

inline double gaussian_cdf_core(double rho, double xu, double xv) {
  return normal::bivariate_cdf(xu, xv, rho);
}

// Interior evaluation; boundaries are handled by callers.
double cdf_interior(const CopulaSpec& spec, double u, double v) {
  if (spec.behaves_independent()) return u * v;
  if (spec.family() == CopulaFamily::frank) {
    const double t = spec.theta();
    const FrankConstants k{t, std::expm1(-t)};
    return frank_cdf_core(k, std::expm1(-t * u), std::expm1(-t * v));
  }
  return gaussian_cdf_core(spec.theta(), normal::quantile(u), normal::quantile(v));
}

}  // namespace

double cdf(const CopulaSpec& spec, double u, double v) {
  check_unit(u, v, "copula cdf");
  if (u == 0.0 || v == 0.0) return 0.0;
  if (u == 1.0) return v;
  if (v == 1.0) return u;
  const double c = cdf_interior(spec, u, v);
  return std::clamp(c, std::max(u + v - 1.0, 0.0), std::min(u, v));
}

double conditional_given_selection(const CopulaSpec& spec, double u, double v) {
  if (!(v > 0.0)) {
    throw Error(ErrorCode::domain, "conditional copula requires v > 0, got " + std::to_string(v));
  }
  check_unit(u, v, "conditional copula");
  if (spec.family() == CopulaFamily::independence) return u;
  return cdf(spec, u, v) / v;
}

void cdf_row(const CopulaSpec& spec, double v, std::span<const double> us,
             std::span<double> out) {
  check_unit(0.0, v, "copula cdf");
  const bool frank = spec.family() == CopulaFamily::frank && !spec.behaves_independent();
  const bool gauss = spec.family() == CopulaFamily::gaussian && !spec.behaves_independent();
  const double t = spec.theta();
  const FrankConstants k{t, frank ? std::expm1(-t) : 0.0};
  const double cv = frank ? std::expm1(-t * v) : 0.0;
  const double xv = (gauss && v > 0.0 && v < 1.0) ? normal::quantile(v) : 0.0;
  for (std::size_t j = 0; j < us.size(); ++j) {
    const double u = us[j];
    check_unit(u, v, "copula cdf");
    double c;
    if (u == 0.0 || v == 0.0) {
      c = 0.0;
    } else if (u == 1.0) {
      c = v;
    } else if (v == 1.0) {
      c = u;
    } else {
      if (frank) {
        c = frank_cdf_core(k, std::expm1(-t * u), cv);
      } else if (gauss) {
        c = gaussian_cdf_core(t, normal::quantile(u), xv);
      } else {
        c = u * v;
      }
      c = std::clamp(c, std::max(u + v - 1.0, 0.0), std::min(u, v));
    }
    out[j] = c;
  }
}

void conditional_given_selection_row(const CopulaSpec& spec, double v, std::span<const double> us,
                                     std::span<double> out) {
  if (!(v > 0.0)) {
    throw Error(ErrorCode::domain, "conditional copula requires v > 0, got " + std::to_string(v));
  }
  if (spec.family() == CopulaFamily::independence) {
    for (std::size_t j = 0; j < us.size(); ++j) {
      check_unit(us[j], v, "conditional copula");
      out[j] = us[j];
    }
    return;
  }
  cdf_row(spec, v, us, out);
  for (std::size_t j = 0; j < us.size(); ++j) out[j] /= v;
}

void conditional_given_selection_grid(const CopulaSpec& spec, std::span<const double> us,
                                      std::span<const double> vs, std::span<double> out) {
  const std::size_t nu = us.size();
  const std::size_t nv = vs.size();
  if (out.size() != nu * nv) throw Error(ErrorCode::domain, "grid output has the wrong size");
  for (double v : vs) {
    if (!(v > 0.0)) {
      throw Error(ErrorCode::domain, "conditional copula requires v > 0, got " + std::to_string(v));
    }
    check_unit(0.0, v, "conditional copula");
  }
  for (double u : us) check_unit(u, 1.0, "conditional copula");
  if (spec.family() == CopulaFamily::independence) {
    for (std::size_t j = 0; j < nu; ++j) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(j * nv), nv, us[j]);
    return;
  }
  const bool frank = spec.family() == CopulaFamily::frank && !spec.behaves_independent();
  const bool gauss = spec.family() == CopulaFamily::gaussian && !spec.behaves_independent();
  const double t = spec.theta();
  const FrankConstants k{t, frank ? std::expm1(-t) : 0.0};
  std::vector<double> hu(nu), hv(nv);
  for (std::size_t j = 0; j < nu; ++j) {
    const double u = us[j];
    const bool interior = u > 0.0 && u < 1.0;
    hu[j] = frank ? std::expm1(-t * u) : (gauss && interior ? normal::quantile(u) : 0.0);
  }
  for (std::size_t i = 0; i < nv; ++i) {
    const double v = vs[i];
    const bool interior = v > 0.0 && v < 1.0;
    hv[i] = frank ? std::expm1(-t * v) : (gauss && interior ? normal::quantile(v) : 0.0);
  }
  for (std::size_t j = 0; j < nu; ++j) {
    const double u = us[j];
    double* row = out.data() + j * nv;
    for (std::size_t i = 0; i < nv; ++i) {
      const double v = vs[i];
      double c;
      if (u == 0.0) {
        c = 0.0;
      } else if (u == 1.0) {
        c = v;
      } else if (v == 1.0) {
        c = u;
      } else {
        if (frank) {
          c = frank_cdf_core(k, hu[j], hv[i]);
        } else if (gauss) {
          c = gaussian_cdf_core(t, hu[j], hv[i]);
        } else {
          c = u * v;
        }
        c = std::clamp(c, std::max(u + v - 1.0, 0.0), std::min(u, v));
      }
      row[i] = c / v;
    }
  }
}

double density(const CopulaSpec& spec, double u, double v) {
  if (!(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0)) {
    throw Error(ErrorCode::domain, "copula density requires (u,v) in the open unit square");
  }
  if (spec.behaves_independent()) return 1.0;
  const double t = spec.theta();
  if (spec.family() == CopulaFamily::frank) {
    const double b = std::expm1(-t);
    const double a = std::expm1(-t * u);
    const double c = std::expm1(-t * v);
    const double den = b + a * c;
    return -t * b * std::exp(-t * (u + v)) / (den * den);
  }
  const double x = normal::quantile(u);
  const double y = normal::quantile(v);
  return normal::bivariate_pdf(x, y, t) / (normal::pdf(x) * normal::pdf(y));
}

double kendall_tau(const CopulaSpec& spec) {
  if (spec.behaves_independent()) return 0.0;
  const double t = spec.theta();
  if (spec.family() == CopulaFamily::gaussian) return 2.0 / normal::kPi * std::asin(t);

  // tau = 1 - 4/theta + 4 D1(theta)/theta, D1 the first Debye function.
  // Evaluated at |theta| and mirrored, since tau is odd in theta.
  const double at = std::abs(t);
  auto integrand = [](double s) { return s == 0.0 ? 1.0 : s / std::expm1(s); };
  double err = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      integrand, 0.0, at, 15, 1e-10, &err);
  const double debye = integral / at;
  const double tau = 1.0 - 4.0 / at + 4.0 * debye / at;
  return t < 0.0 ? -tau : tau;
}

double conditional_given_v(const CopulaSpec& spec, double u, double v) {
  check_unit(u, v, "conditional copula");
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  if (spec.behaves_independent()) return u;
  const double t = spec.theta();
  if (spec.family() == CopulaFamily::frank) {
    const double b = std::expm1(-t);
    const double a = std::expm1(-t * u);
    const double c = std::expm1(-t * v);
    return std::clamp(std::exp(-t * v) * a / (b + a * c), 0.0, 1.0);
  }
  if (v == 0.0 || v == 1.0) {
    // Limits of the Gaussian h-function at the v boundary.
    return (v == 0.0) == (t > 0.0) ? 1.0 : 0.0;
  }
  const double z = (normal::quantile(u) - t * normal::quantile(v)) / std::sqrt(1.0 - t * t);
  return normal::cdf(z);
}

double inverse_conditional_given_v(const CopulaSpec& spec, double p, double v) {
  check_unit(p, v, "inverse conditional copula");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  if (spec.behaves_independent()) return p;
  const double t = spec.theta();
  if (spec.family() == CopulaFamily::frank) {
    const double b = std::expm1(-t);
    const double c = std::expm1(-t * v);
    const double a = p * b / (std::exp(-t * v) - p * c);
    return std::clamp(-std::log1p(a) / t, 0.0, 1.0);
  }
  const double xv = (v > 0.0 && v < 1.0) ? normal::quantile(v) : 0.0;
  return normal::cdf(t * xv + std::sqrt(1.0 - t * t) * normal::quantile(p));
}

double inverse_conditional_given_selection(const CopulaSpec& spec, double p, double v) {
  check_unit(p, v, "inverse conditional copula");
  if (!(v > 0.0)) throw Error(ErrorCode::domain, "inverse conditional copula requires v > 0");
  if (spec.family() == CopulaFamily::independence || v == 1.0) return p;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (conditional_given_selection(spec, mid, v) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace qrs
