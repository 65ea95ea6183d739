#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qrs/dataset.hpp"
#include "qrs/pipeline.hpp"

namespace qrs {

/// Which group supplies covariates (h), SQF (k), copula (l) and propensity (m).
struct CfIndex {
  int h = 0;
  int k = 0;
  int l = 0;
  int m = 0;

  static CfIndex same(int d) { return {d, d, d, d}; }
  /// Parses "1011"-style labels.
  static CfIndex parse(std::string_view label);
  std::string label() const;
  void validate() const;

  friend bool operator==(const CfIndex&, const CfIndex&) = default;
};

enum class CfKind {
  mean_participants,
  mean_population,
  cdf_participants,
  cdf_population,
  quantile_participants,
  quantile_population,
  mean_propensity,
  mean_u,
  potential_mean,
  potential_cdf,
  potential_quantile,
};

std::string_view to_string(CfKind kind);
CfKind parse_cf_kind(std::string_view name);
bool kind_takes_argument(CfKind kind);

/// A counterfactual functional; `arg` is y for CDFs and tau for quantiles.
struct CfStat {
  CfKind kind = CfKind::mean_participants;
  std::optional<double> arg;

  /// Throws a config error unless arg is present exactly when required.
  void validate() const;
  /// "kind" or "kind@arg".
  std::string label() const;
  static CfStat parse(std::string_view label);

  friend bool operator==(const CfStat&, const CfStat&) = default;
};

enum class CfTarget { participants, population, potential };

CfTarget target_of(CfKind kind);

using FitPair = std::array<QrsFit, 2>;

struct CfOptions {
  /// Observation weights indexed by dataset row; empty means all ones.
  std::span<const double> weights;
  /// Sort each observation's fitted quantiles across the grid before use.
  bool rearrange = false;
};

/// Discrete counterfactual law: atoms at fitted quantiles with grid masses,
/// plus the trimming floor and (population target) the mass at zero.
class CfDistribution {
 public:
  CfDistribution(std::vector<std::pair<double, double>> atoms, double total_weight, double floor,
                 double zero_mass, bool population, double eps);

  double cdf(double y) const;
  /// inf{y in candidates : cdf(y) >= tau}; the largest candidate when tau is
  /// never reached. Trimming error unless eps < tau < 1 - eps.
  double quantile(double tau) const;
  /// Atom values, plus 0 for the population target, ascending and unique.
  std::vector<double> candidates() const;
  /// CDF mass at or below zero that comes from non-participation.
  double zero_mass() const noexcept { return zero_mass_; }

 private:
  std::vector<double> values_;
  std::vector<double> cum_;  // cumulative normalized mass through values_[i]
  double floor_;
  double zero_mass_;
  bool population_;
  double eps_;
};

/// Evaluates counterfactual functionals for one pair of fits and caches the
/// fitted-quantile and copula-increment matrices it builds. Not thread safe;
/// use one engine per thread.
class CfEngine {
 public:
  CfEngine(const FitPair& fits, const Dataset& ds, CfOptions options = {});

  double value(const CfIndex& idx, const CfStat& stat);
  double mean(const CfIndex& idx, CfTarget target);
  double mean_propensity(int h, int m);
  double mean_u(int h, int l, int m);
  const CfDistribution& distribution(const CfIndex& idx, CfTarget target);

  double eps() const noexcept { return eps_; }

 private:
  struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major
    const double* row(std::size_t i) const { return data.data() + i * cols; }
  };

  const Matrix& fitted(int h, int k);
  const Matrix& increments(int h, int l, int m, CfTarget target);
  const std::vector<double>& pi(int h, int m);
  double total_weight(int h);

  const FitPair& fits_;
  const Dataset& ds_;
  CfOptions options_;
  double eps_;
  std::vector<double> edges_;
  std::array<std::vector<std::size_t>, 2> rows_;
  std::array<std::vector<double>, 2> w_;
  std::map<std::array<int, 2>, Matrix> fitted_;
  std::map<std::array<int, 4>, Matrix> increments_;
  std::map<std::array<int, 2>, std::vector<double>> pi_;
  std::map<std::array<int, 5>, std::unique_ptr<CfDistribution>> dists_;
};

/// Throws a config error when the fits do not share a grid or dimension.
void check_compatible(const FitPair& fits, const Dataset& ds);

double cf_mean_participants(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o = {});
double cf_mean_population(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o = {});
double cf_cdf_participants(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double y, CfOptions o = {});
double cf_cdf_population(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double y, CfOptions o = {});
double cf_quantile(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double tau, CfTarget target,
                   CfOptions o = {});
double cf_mean_propensity(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o = {});
double cf_mean_u(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o = {});
/// Potential-outcome functional for covariates of h and SQF of k; the stat
/// kind must be one of the potential_* kinds.
double potential_stat(const FitPair& fits, const Dataset& ds, int h, int k, const CfStat& stat, CfOptions o = {});

}  // namespace qrs
