#pragma once

#include <span>
#include <string>
#include <string_view>

namespace qrs {

enum class CopulaFamily { independence, frank, gaussian };

std::string_view to_string(CopulaFamily family);
/// Accepts "independence" | "frank" | "gaussian".
CopulaFamily parse_copula_family(std::string_view name);

/// One-parameter copula of the uniform-normalized unobservables (U, V).
/// Negative parameters mean negatively dependent (U, V), i.e. positive
/// selection into participation.
class CopulaSpec {
 public:
  static constexpr double kFrankCap = 50.0;
  static constexpr double kGaussianCap = 0.995;
  static constexpr double kFrankIndependenceBand = 1e-6;

  CopulaSpec() = default;

  static CopulaSpec independence() { return {}; }
  /// Throws a domain error when theta is outside the family cap.
  static CopulaSpec frank(double theta);
  static CopulaSpec gaussian(double rho);
  static CopulaSpec make(CopulaFamily family, double theta);

  CopulaFamily family() const noexcept { return family_; }
  double theta() const noexcept { return theta_; }

  /// True when evaluation routes to the independence formulas (Independence,
  /// Frank with |theta| < 1e-6, Gaussian with rho == 0).
  bool behaves_independent() const noexcept;

  friend bool operator==(const CopulaSpec&, const CopulaSpec&) = default;

 private:
  CopulaSpec(CopulaFamily family, double theta) : family_(family), theta_(theta) {}

  CopulaFamily family_ = CopulaFamily::independence;
  double theta_ = 0.0;
};

/// Joint CDF C(u, v). Domain error outside [0,1]^2.
double cdf(const CopulaSpec& spec, double u, double v);

/// G(u, v) = C(u, v) / v, the law of U among participants at threshold v.
/// Independence returns u itself.
double conditional_given_selection(const CopulaSpec& spec, double u, double v);

/// Copula density on the open unit square.
double density(const CopulaSpec& spec, double u, double v);

double kendall_tau(const CopulaSpec& spec);

/// P(U <= u | V = v) = dC/dv.
double conditional_given_v(const CopulaSpec& spec, double u, double v);

/// Inverse in u of conditional_given_v; used to sample U given V.
double inverse_conditional_given_v(const CopulaSpec& spec, double p, double v);

/// Inverse in u of conditional_given_selection, found by bisection to 1e-12.
double inverse_conditional_given_selection(const CopulaSpec& spec, double p, double v);

/// Evaluates u -> G(u, v) for a fixed v over many u with the v-dependent work
/// hoisted out of the loop. Results are bit-identical to the scalar calls.
void conditional_given_selection_row(const CopulaSpec& spec, double v, std::span<const double> us,
                                     std::span<double> out);

/// G over a grid: out[j * vs.size() + i] = G(us[j], vs[i]), with all
/// u- and v-dependent work hoisted. Bit-identical to the scalar calls.
void conditional_given_selection_grid(const CopulaSpec& spec, std::span<const double> us,
                                      std::span<const double> vs, std::span<double> out);

/// Row version of cdf for fixed v.
void cdf_row(const CopulaSpec& spec, double v, std::span<const double> us, std::span<double> out);

}  // namespace qrs
