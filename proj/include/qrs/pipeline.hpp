#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qrs/copula.hpp"
#include "qrs/dataset.hpp"
#include "qrs/propensity.hpp"
#include "qrs/rotated_qr.hpp"

namespace qrs {

/// Quantile grid on [eps, 1 - eps] with a fixed step.
struct TauGrid {
  double eps = 0.01;
  double step = 0.01;
  std::vector<double> points;

  /// Throws a config error unless 0 < eps < 0.5 and 0 < step <= 1 - 2 eps.
  static TauGrid make(double eps = 0.01, double step = 0.01);

  std::size_t size() const noexcept { return points.size(); }

  /// Cell edges: eps, midpoints between consecutive points, 1 - eps.
  std::vector<double> edges() const;

  friend bool operator==(const TauGrid&, const TauGrid&) = default;
};

/// Instrument function of the copula criterion.
enum class InstrumentFn { propensity, mw2019 };

std::string_view to_string(InstrumentFn fn);
InstrumentFn parse_instrument_fn(std::string_view name);

struct ThetaSearch {
  double lo = 0.0;
  double hi = 0.0;
  int coarse_points = 41;
  double refine_tol = 1e-3;

  /// Default bounds for a family: Frank +-42.889, Gaussian +-0.99.
  static ThetaSearch defaults(CopulaFamily family);
};

struct QrsConfig {
  TauGrid grid = TauGrid::make();
  CopulaFamily family = CopulaFamily::frank;
  std::optional<ThetaSearch> search;  // family defaults when empty
  InstrumentFn instrument = InstrumentFn::propensity;
  PropensitySpec propensity;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  ThetaSearch effective_search() const;
  /// Throws a config error when the search bounds leave the family cap or the
  /// grid is malformed.
  void validate() const;
};

struct CriterionPoint {
  double theta = 0.0;
  double value = 0.0;
};

/// Per-group estimate bundle.
struct QrsFit {
  int group = 0;
  PropensityModel propensity;
  CopulaSpec copula;
  TauGrid grid;
  std::vector<std::string> x_names;
  /// Row j is beta(tau_j).
  Eigen::MatrixXd beta;
  /// Predicted propensity of this group's model for every dataset row.
  std::vector<double> pi_hat;
  double criterion = 0.0;
  /// Every evaluated (theta, criterion) pair, in evaluation order.
  std::vector<CriterionPoint> trace;
  std::vector<std::string> warnings;

  double kendall() const { return kendall_tau(copula); }
};

/// Estimation problem for one group with its propensity fixed; the quantile
/// regression design is prepared once and reused for every copula parameter.
class GroupProblem {
 public:
  GroupProblem(const Dataset& ds, int d, const PropensityModel& model, const TauGrid& grid,
               std::span<const double> weights = {});

  struct Evaluation {
    Eigen::MatrixXd beta;
    double criterion = 0.0;
  };

  /// beta(tau; t) for every grid point and the criterion at t.
  Evaluation evaluate(const CopulaSpec& t, InstrumentFn fn) const;

  std::size_t participants() const noexcept { return rows_.size(); }
  const std::vector<double>& participant_pi() const noexcept { return pi_; }

 private:
  TauGrid grid_;
  std::vector<std::size_t> rows_;
  RowMatrix x_;
  std::vector<double> y_;
  std::vector<double> w_;
  std::vector<double> pi_;
  std::optional<RotatedQr> qr_;
};

/// Rotated quantile regression over the grid at copula t. Row j of the result
/// solves the problem with levels G(tau_j, pi_i; t) over group-d participants.
Eigen::MatrixXd profile_beta(const Dataset& ds, int d, const PropensityModel& model,
                             const CopulaSpec& t, const TauGrid& grid,
                             std::span<const double> weights = {});

/// Absolute value of the weighted grid moment
///   sum_i w_i sum_j phi(tau_j, z_i) [1(y_i <= x_i' beta(tau_j; t)) - G(tau_j, pi_i; t)] dtau.
double copula_criterion(const Dataset& ds, int d, const PropensityModel& model, const CopulaSpec& t,
                        const TauGrid& grid, InstrumentFn fn, std::span<const double> weights = {});

/// Propensity fit, copula search and final coefficients for group d.
QrsFit fit_group(const Dataset& ds, int d, const QrsConfig& cfg, std::span<const double> weights = {});

}  // namespace qrs
