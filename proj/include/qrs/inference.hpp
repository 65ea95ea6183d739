#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrs/counterfactual.hpp"
#include "qrs/decomposition.hpp"
#include "qrs/pipeline.hpp"
#include "qrs/rng.hpp"

namespace qrs {

enum class WeightLaw {
  exponential_unit_mean,
  unit,  // every weight is 1; reproduces the point estimate
};

std::string_view to_string(WeightLaw law);
WeightLaw parse_weight_law(std::string_view name);

struct BootstrapConfig {
  std::size_t replications = 200;
  WeightLaw law = WeightLaw::exponential_unit_mean;
  std::uint64_t seed = 1;
  /// Variance of the weight law.
  double omega0 = 1.0;
  unsigned workers = 1;
  /// Largest tolerated share of failed replications.
  double max_failure_share = 0.10;

  /// Config error unless J >= 2 and omega0 matches the law.
  void validate() const;
};

std::vector<double> draw_weights(std::size_t n, Rng& rng, WeightLaw law = WeightLaw::exponential_unit_mean);

/// Standard normal interquartile range, Phi^{-1}(0.75) - Phi^{-1}(0.25).
inline constexpr double kNormalIqr = 1.3489795003921634;

/// ((Q75 - Q25) / kNormalIqr)^2 with linearly interpolated sample quartiles.
/// Insufficient-draws error when fewer than 4 draws.
double iqr_variance(std::span<const double> draws);

/// "***", "**", "*" or "" for |estimate / se| above 2.576, 1.96, 1.645.
std::string stars(double estimate, double se);

inline constexpr std::array<double, 3> kKsLevels{0.90, 0.95, 0.99};

struct KsResult {
  double statistic = 0.0;
  /// Bootstrap quantiles of the centred sup statistic at kKsLevels.
  std::array<double, 3> critical{};
  /// Grid positions left out because their bootstrap variance is zero.
  std::vector<std::size_t> dropped;
  /// Bootstrap sup statistics, one per draw.
  std::vector<double> sup_draws;

  bool reject(double level) const;
};

/// Uniform test of point == hypothesis over a grid. draws[j][g] is draw j at
/// grid position g. Degenerate-test error when every variance is zero.
KsResult ks_test(const std::vector<std::vector<double>>& draws, std::span<const double> point,
                 std::span<const double> hypothesis);

/// Fits both groups with the same observation weights.
FitPair fit_pair(const Dataset& ds, const QrsConfig& cfg, std::span<const double> weights = {});

/// Evaluates requests sharing one counterfactual engine.
std::vector<DecompResult> evaluate_requests(const FitPair& fits, const Dataset& ds,
                                            std::span<const DecompRequest> requests, CfOptions options = {});

struct BootstrapDraws {
  DecompRequest request;
  std::vector<std::string> entry_names;
  /// values[e][r]: entry e in the r-th successful replication.
  std::vector<std::vector<double>> values;
};

struct BootstrapFailure {
  std::size_t replication = 0;
  std::string message;
};

struct BootstrapResult {
  std::size_t requested = 0;
  /// Ids of the successful replications, ascending.
  std::vector<std::size_t> replications;
  std::vector<BootstrapFailure> failures;
  std::vector<BootstrapDraws> draws;
};

/// Called once per successful replication, in increasing replication order.
using DrawSink = std::function<void(std::size_t replication, const std::vector<DecompResult>&)>;

/// Weighted bootstrap: replication j draws one weight vector from the stream
/// (seed, j), refits both groups with it and re-evaluates every request.
/// Failed replications are excluded and reported; a failure share above
/// max_failure_share raises an insufficient-draws error.
BootstrapResult bootstrap_run(const Dataset& ds, const QrsConfig& qrs, const BootstrapConfig& boot,
                              std::span<const DecompRequest> requests, const DrawSink& sink = {},
                              bool rearrange = false);

/// Fills se and stars of each point result from the matching draws.
void attach_inference(std::vector<DecompResult>& point, const BootstrapResult& boot);

}  // namespace qrs
