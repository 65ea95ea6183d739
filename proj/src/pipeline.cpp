#include "qrs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qrs/error.hpp"
#include "qrs/parallel.hpp"

namespace qrs {

TauGrid TauGrid::make(double eps, double step) {
  if (!(eps > 0.0 && eps < 0.5)) {
    throw Error(ErrorCode::config, "trimming constant must lie in (0, 0.5), got " + std::to_string(eps));
  }
  const double span = 1.0 - 2.0 * eps;
  if (!(step > 0.0 && step <= span + 1e-12)) {
    throw Error(ErrorCode::config, "grid step must lie in (0, 1 - 2 eps], got " + std::to_string(step));
  }
  TauGrid g;
  g.eps = eps;
  g.step = step;
  const auto intervals = static_cast<long>(std::floor(span / step + 1e-9));
  for (long j = 0; j <= intervals; ++j) g.points.push_back(eps + static_cast<double>(j) * step);
  // The last point lands on 1 - eps when the step divides the span.
  if (std::abs(g.points.back() - (1.0 - eps)) < 1e-9) g.points.back() = 1.0 - eps;
  return g;
}

std::vector<double> TauGrid::edges() const {
  std::vector<double> e;
  e.reserve(points.size() + 1);
  e.push_back(eps);
  for (std::size_t j = 1; j < points.size(); ++j) e.push_back(0.5 * (points[j - 1] + points[j]));
  e.push_back(1.0 - eps);
  return e;
}

std::string_view to_string(InstrumentFn fn) {
  return fn == InstrumentFn::propensity ? "propensity" : "mw2019";
}

InstrumentFn parse_instrument_fn(std::string_view name) {
  if (name == "propensity") return InstrumentFn::propensity;
  if (name == "mw2019") return InstrumentFn::mw2019;
  throw Error(ErrorCode::config, "unknown instrument function '" + std::string(name) + "'");
}

ThetaSearch ThetaSearch::defaults(CopulaFamily family) {
  ThetaSearch s;
  switch (family) {
    case CopulaFamily::independence: break;
    case CopulaFamily::frank:
      s.lo = -42.889;
      s.hi = 42.889;
      break;
    case CopulaFamily::gaussian:
      s.lo = -0.99;
      s.hi = 0.99;
      break;
  }
  return s;
}

ThetaSearch QrsConfig::effective_search() const {
  return search ? *search : ThetaSearch::defaults(family);
}

void QrsConfig::validate() const {
  if (grid.points.empty()) throw Error(ErrorCode::config, "quantile grid is empty");
  if (workers == 0) throw Error(ErrorCode::config, "worker count must be positive");
  if (family == CopulaFamily::independence) return;
  const ThetaSearch s = effective_search();
  if (!(s.lo < s.hi)) throw Error(ErrorCode::config, "theta search requires lo < hi");
  if (s.coarse_points < 3) throw Error(ErrorCode::config, "theta search needs at least 3 coarse points");
  if (!(s.refine_tol > 0.0)) throw Error(ErrorCode::config, "theta refinement tolerance must be positive");
  const double cap = family == CopulaFamily::frank ? CopulaSpec::kFrankCap : CopulaSpec::kGaussianCap;
  const bool inside = family == CopulaFamily::frank ? (std::abs(s.lo) <= cap && std::abs(s.hi) <= cap)
                                                    : (std::abs(s.lo) < cap && std::abs(s.hi) < cap);
  if (!inside) throw Error(ErrorCode::config, "theta search bounds exceed the copula family cap");
}

GroupProblem::GroupProblem(const Dataset& ds, int d, const PropensityModel& model, const TauGrid& grid,
                           std::span<const double> weights)
    : grid_(grid) {
  if (!weights.empty() && weights.size() != ds.size()) {
    throw Error(ErrorCode::domain, "weight vector length does not match the dataset");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.d()[i] == d && ds.s()[i] == 1) rows_.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(ds.dim());
  if (rows_.size() <= static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::domain, "group " + std::to_string(d) + " has " + std::to_string(rows_.size()) +
                                       " participants; at least " + std::to_string(k + 1) + " are required");
  }
  const RowMatrix z = propensity_design(ds, model.spec);
  x_.resize(static_cast<Eigen::Index>(rows_.size()), k);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const std::size_t i = rows_[r];
    x_.row(static_cast<Eigen::Index>(r)) = ds.x().row(static_cast<Eigen::Index>(i));
    y_.push_back(ds.y()[i]);
    w_.push_back(weights.empty() ? 1.0 : weights[i]);
    const auto zr = z.row(static_cast<Eigen::Index>(i));
    pi_.push_back(predict(model, std::span<const double>(zr.data(), static_cast<std::size_t>(zr.size()))));
  }
  qr_.emplace(x_, y_, w_, ds.x_names());
}

GroupProblem::Evaluation GroupProblem::evaluate(const CopulaSpec& t, InstrumentFn fn) const {
  const std::size_t m = rows_.size();
  const std::size_t nj = grid_.size();
  const auto k = x_.cols();
  std::vector<double> g(nj * m);
  conditional_given_selection_grid(t, grid_.points, pi_, g);

  std::vector<double> levels(m);
  Evaluation ev;
  ev.beta.resize(static_cast<Eigen::Index>(nj), k);
  auto solve_at = [&](std::size_t j, const std::vector<std::size_t>& warm) {
    const double* gj = g.data() + j * m;
    for (std::size_t i = 0; i < m; ++i) levels[i] = std::clamp(gj[i], kLevelClamp, 1.0 - kLevelClamp);
    QrSolution sol = qr_->solve(levels, warm);
    ev.beta.row(static_cast<Eigen::Index>(j)) = sol.coef.transpose();
    return sol.basis;
  };
  // Warm-started sweeps outward from the middle of the grid.
  const std::size_t mid = nj / 2;
  const std::vector<std::size_t> mid_basis = solve_at(mid, {});
  std::vector<std::size_t> basis = mid_basis;
  for (std::size_t j = mid; j-- > 0;) basis = solve_at(j, basis);
  basis = mid_basis;
  for (std::size_t j = mid + 1; j < nj; ++j) basis = solve_at(j, basis);

  // Grid moment; the sum runs over observations in a fixed order.
  double moment = 0.0;
  const double* xd = x_.data();
  const auto ku = static_cast<std::size_t>(k);
  std::vector<double> fits(nj);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = xd + i * ku;
    const double tol = 1e-10 * (1.0 + std::abs(y_[i]));
    double inner = 0.0;
    for (std::size_t j = 0; j < nj; ++j) {
      double fit = 0.0;
      for (std::size_t c = 0; c < ku; ++c) fit += xi[c] * ev.beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
      const double tau = grid_.points[j];
      const double phi = fn == InstrumentFn::propensity ? pi_[i] : std::sqrt(tau * (1.0 - tau)) * pi_[i];
      const double ind = y_[i] <= fit + tol ? 1.0 : 0.0;
      inner += phi * (ind - g[j * m + i]);
    }
    moment += w_[i] * inner * grid_.step;
  }
  ev.criterion = std::abs(moment);
  return ev;
}

Eigen::MatrixXd profile_beta(const Dataset& ds, int d, const PropensityModel& model, const CopulaSpec& t,
                             const TauGrid& grid, std::span<const double> weights) {
  return GroupProblem(ds, d, model, grid, weights).evaluate(t, InstrumentFn::propensity).beta;
}

double copula_criterion(const Dataset& ds, int d, const PropensityModel& model, const CopulaSpec& t,
                        const TauGrid& grid, InstrumentFn fn, std::span<const double> weights) {
  return GroupProblem(ds, d, model, grid, weights).evaluate(t, fn).criterion;
}

namespace {

// Strict preference: lower criterion, then smaller |theta|, then smaller theta.
bool better(const CriterionPoint& a, const CriterionPoint& b) {
  if (a.value != b.value) return a.value < b.value;
  if (std::abs(a.theta) != std::abs(b.theta)) return std::abs(a.theta) < std::abs(b.theta);
  return a.theta < b.theta;
}

}  // namespace

QrsFit fit_group(const Dataset& ds, int d, const QrsConfig& cfg, std::span<const double> weights) {
  cfg.validate();
  if (!weights.empty() && weights.size() != ds.size()) {
    throw Error(ErrorCode::domain, "weight vector length does not match the dataset");
  }
  std::size_t n = 0, yes = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.d()[i] != d || (!weights.empty() && !(weights[i] > 0.0))) continue;
    ++n;
    yes += ds.s()[i];
  }
  if (n == 0) throw Error(ErrorCode::empty_data, "group " + std::to_string(d) + " has no observations");
  if (yes == 0) throw Error(ErrorCode::empty_data, "group " + std::to_string(d) + " has no participants");

  QrsFit fit;
  fit.group = d;
  fit.grid = cfg.grid;
  fit.x_names = ds.x_names();
  if (yes == n) {
    fit.propensity = PropensityModel::degenerate_all_participants(cfg.propensity, propensity_names(ds, cfg.propensity));
    fit.warnings.push_back("group " + std::to_string(d) +
                           ": every observation participates; propensity set to 1");
  } else {
    fit.propensity = fit_propensity(ds, d, cfg.propensity, weights);
  }

  const GroupProblem problem(ds, d, fit.propensity, cfg.grid, weights);
  GroupProblem::Evaluation best_eval;
  CriterionPoint best;
  if (cfg.family == CopulaFamily::independence) {
    best_eval = problem.evaluate(CopulaSpec::independence(), cfg.instrument);
    best = {0.0, best_eval.criterion};
    fit.trace.push_back(best);
    fit.copula = CopulaSpec::independence();
  } else {
    const ThetaSearch s = cfg.effective_search();
    const auto np = static_cast<std::size_t>(s.coarse_points);
    std::vector<double> thetas(np);
    for (std::size_t q = 0; q < np; ++q) {
      thetas[q] = q + 1 == np ? s.hi : s.lo + (s.hi - s.lo) * static_cast<double>(q) / static_cast<double>(np - 1);
    }
    std::vector<GroupProblem::Evaluation> coarse(np);
    parallel_for(np, cfg.workers, [&](std::size_t q) {
      coarse[q] = problem.evaluate(CopulaSpec::make(cfg.family, thetas[q]), cfg.instrument);
    });
    std::size_t bq = 0;
    for (std::size_t q = 0; q < np; ++q) {
      const CriterionPoint pt{thetas[q], coarse[q].criterion};
      fit.trace.push_back(pt);
      if (q == 0 || better(pt, best)) {
        best = pt;
        bq = q;
      }
    }
    best_eval = coarse[bq];

    double lo_v = coarse.front().criterion, hi_v = lo_v;
    for (const auto& e : coarse) {
      lo_v = std::min(lo_v, e.criterion);
      hi_v = std::max(hi_v, e.criterion);
    }
    bool weak = hi_v - lo_v < 1e-10;
    if (bq > 0 && bq + 1 < np) {
      const double h = thetas[1] - thetas[0];
      const double curv = (coarse[bq - 1].criterion - 2.0 * coarse[bq].criterion + coarse[bq + 1].criterion) / (h * h);
      weak = weak || curv < 1e-8;
    }
    if (weak) {
      fit.warnings.push_back("group " + std::to_string(d) +
                             ": copula criterion is flat near its minimum; the dependence parameter is weakly identified");
    }

    // Golden-section refinement inside the neighbouring coarse bracket.
    double a = thetas[bq > 0 ? bq - 1 : 0];
    double b = thetas[bq + 1 < np ? bq + 1 : np - 1];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto eval_at = [&](double th) {
      GroupProblem::Evaluation e = problem.evaluate(CopulaSpec::make(cfg.family, th), cfg.instrument);
      const CriterionPoint pt{th, e.criterion};
      fit.trace.push_back(pt);
      if (better(pt, best)) {
        best = pt;
        best_eval = std::move(e);
      }
      return pt.value;
    };
    double c = b - inv_phi * (b - a);
    double e = a + inv_phi * (b - a);
    double fc = eval_at(c);
    double fe = eval_at(e);
    while (b - a > s.refine_tol) {
      if (fc <= fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - inv_phi * (b - a);
        fc = eval_at(c);
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + inv_phi * (b - a);
        fe = eval_at(e);
      }
    }
    fit.copula = CopulaSpec::make(cfg.family, best.theta);
  }
  fit.beta = std::move(best_eval.beta);
  fit.criterion = best.value;
  if (fit.propensity.all_participants) {
    fit.pi_hat.assign(ds.size(), 1.0);
  } else {
    fit.pi_hat = predict_rows(fit.propensity, ds);
  }
  return fit;
}

}  // namespace qrs
