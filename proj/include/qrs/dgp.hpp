#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qrs/copula.hpp"
#include "qrs/counterfactual.hpp"
#include "qrs/dataset.hpp"
#include "qrs/propensity.hpp"

namespace qrs {

/// Structural primitives of one group. The SQF is
///   g(x, tau) = intercept + scale * Phi^{-1}(tau) + x' slopes,
/// and participation follows the link applied to gamma'(1, z1, x).
struct DgpGroup {
  double intercept = 1.0;
  double scale = 1.0;
  Eigen::VectorXd slopes = Eigen::VectorXd::Constant(1, 0.5);
  Eigen::VectorXd gamma;
  Link link = Link::probit;
  CopulaSpec copula;
};

/// z1 takes values[i] with probability probs[i]; covariate c is uniform on
/// [x_lo[c], x_hi[c]], independently of z1.
struct CovariateLaw {
  std::vector<double> z1_values{0.0, 1.0, 2.0, 3.0};
  std::vector<double> z1_probs{0.4, 0.3, 0.2, 0.1};
  std::vector<double> x_lo{0.0};
  std::vector<double> x_hi{2.0};
};

struct DgpSpec {
  std::array<DgpGroup, 2> groups;
  std::array<CovariateLaw, 2> covariates;
  std::array<std::size_t, 2> n{20000, 20000};
  std::uint64_t seed = 1;

  /// Validation design: both groups share beta(tau) = (1 + Phi^{-1}(tau), 0.5),
  /// probit gamma over (1, z1, x) = (0.3, -0.4, 0.8) for group 0 and
  /// (0.0, -0.4, 0.8) for group 1, Frank copulas with theta -5 and -2.
  static DgpSpec defaults();

  std::size_t dim() const noexcept { return covariates[0].x_lo.size(); }

  /// Coefficients (intercept first) of group d's SQF at tau.
  Eigen::VectorXd beta(int d, double tau) const;
  double sqf(int d, std::span<const double> x, double tau) const;  // x without intercept
  double propensity(int d, double z1, std::span<const double> x) const;

  /// Spec error unless the SQF increases in tau on the support and every
  /// propensity on the support lies in (0.02, 0.98).
  void validate() const;
};

/// Latent draws behind a simulated dataset, in dataset row order.
struct Simulation {
  Dataset data;
  std::vector<double> u;
  std::vector<double> v;
};

/// Column names used by simulated datasets: y, s, d, z1, x1..xp.
Schema simulation_schema(std::size_t dim);

Simulation simulate_with_latent(const DgpSpec& spec);
Dataset simulate(const DgpSpec& spec);

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
};

/// Monte Carlo value of a counterfactual functional at the true primitives,
/// with the same trimming convention as the estimators (mass outside
/// [eps, 1 - eps] carries no outcome, CDFs get the eps floor). Requires
/// mc_n >= 1e5. The standard error comes from 20 independent batches.
OracleValue true_counterfactual(const DgpSpec& spec, const CfIndex& idx, const CfStat& stat,
                                std::size_t mc_n, double eps = 0.01, std::uint64_t seed = 7);

struct MomentCheck {
  std::vector<double> tau;
  std::vector<double> lhs;  // Monte Carlo F(F^{-1}(tau | z') | z)
  std::vector<double> rhs;  // G(G^{-1}(tau, pi'), pi)
  std::vector<double> se;
  double max_abs_discrepancy = 0.0;
  double max_se = 0.0;
};

/// Identification moment for group d between instrument values z1 and z1'
/// at a common x (given without intercept).
MomentCheck check_identification_moment(const DgpSpec& spec, int d, double z1, double z1_prime,
                                        std::span<const double> x, const std::vector<double>& tau_grid,
                                        std::size_t mc_n = 200000, std::uint64_t seed = 11);

/// Same check with the two propensity values given directly.
MomentCheck check_identification_moment_at(const DgpSpec& spec, int d, double pi, double pi_prime,
                                           std::span<const double> x, const std::vector<double>& tau_grid,
                                           std::size_t mc_n = 200000, std::uint64_t seed = 11);

}  // namespace qrs
