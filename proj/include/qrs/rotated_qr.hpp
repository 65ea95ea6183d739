#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qrs/dataset.hpp"

namespace qrs {

/// Check function rho_tau(r) = r * (tau - 1(r < 0)).
double check_loss(double tau, double r);

/// Weighted linear quantile regression with a quantile level per observation.
struct QrProblem {
  RowMatrix x;
  std::vector<double> y;
  std::vector<double> levels;
  std::vector<double> weights;  // empty means all ones
};

struct QrSolution {
  Eigen::VectorXd coef;
  /// Rows (in problem order) that the solution interpolates.
  std::vector<std::size_t> basis;
  double objective = 0.0;
  int iterations = 0;
};

inline constexpr double kLevelClamp = 1e-4;

/// Reusable solver for one design: validation, rank check and zero-weight
/// removal happen once, then many level vectors can be solved, optionally
/// starting from a previous basis.
class RotatedQr {
 public:
  RotatedQr(const RowMatrix& x, std::span<const double> y, std::span<const double> weights = {},
            std::vector<std::string> names = {});

  std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t rows() const noexcept { return n_; }

  /// `levels` is indexed by problem row. `warm` is a basis from an earlier
  /// solution on this design; invalid or singular starts fall back to a cold
  /// start.
  QrSolution solve(std::span<const double> levels, const std::vector<std::size_t>& warm = {}) const;

  /// Objective at an arbitrary coefficient vector (levels clamped as in solve).
  double objective(std::span<const double> levels, const Eigen::VectorXd& b) const;

 private:
  std::vector<std::size_t> cold_basis(const std::vector<double>& tau) const;

  RowMatrix x_;               // rows with positive weight only
  std::vector<double> y_;
  std::vector<double> w_;
  std::vector<double> ztol_;  // residuals this small count as interpolated
  std::vector<std::size_t> row_of_;  // compact row -> problem row
  std::vector<std::ptrdiff_t> compact_of_;  // problem row -> compact row or -1
  std::size_t n_ = 0;         // problem rows
  double wscale_ = 0.0;       // sum of w_i * max(1, |x_i|_inf)
};

/// One-shot solve of a QrProblem.
QrSolution solve(const QrProblem& p);

}  // namespace qrs
