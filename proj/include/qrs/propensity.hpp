#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qrs/dataset.hpp"

namespace qrs {

enum class Link { probit, logit };

std::string_view to_string(Link link);
Link parse_link(std::string_view name);

/// Regressor set of the participation equation: (1, z1, covariates, interactions).
struct PropensitySpec {
  Link link = Link::probit;
  /// Covariates entering the equation; empty means every outcome covariate.
  std::optional<std::vector<std::string>> covariates;
  /// Products of pairs of named columns (instrument or covariates).
  std::vector<std::pair<std::string, std::string>> interactions;
};

struct PropensityModel {
  Link link = Link::probit;
  PropensitySpec spec;
  std::vector<std::string> names;
  Eigen::VectorXd gamma;
  bool converged = false;
  double loglik = 0.0;
  int iterations = 0;
  /// Set when the group has no non-participants; predictions are exactly 1.
  bool all_participants = false;

  static PropensityModel degenerate_all_participants(const PropensitySpec& spec,
                                                     std::vector<std::string> names);
};

inline constexpr double kPropensityClamp = 1e-6;

/// Regressor names and rows for the given spec, over all dataset rows.
std::vector<std::string> propensity_names(const Dataset& ds, const PropensitySpec& spec);
RowMatrix propensity_design(const Dataset& ds, const PropensitySpec& spec);

/// Weighted maximum likelihood for P(s=1 | z) within group d by Newton-Raphson
/// with step halving. `weights` (if non-empty) is indexed by dataset row.
PropensityModel fit_propensity(const Dataset& ds, int d, const PropensitySpec& spec,
                               std::span<const double> weights = {});

/// Link applied to z'gamma, clamped to [1e-6, 1 - 1e-6].
double predict(const PropensityModel& model, std::span<const double> z);

/// Predictions for every dataset row.
std::vector<double> predict_rows(const PropensityModel& model, const Dataset& ds);

}  // namespace qrs
