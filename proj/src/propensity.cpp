#include "qrs/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "qrs/error.hpp"
#include "qrs/normal.hpp"

namespace qrs {

std::string_view to_string(Link link) { return link == Link::probit ? "probit" : "logit"; }

Link parse_link(std::string_view name) {
  if (name == "probit") return Link::probit;
  if (name == "logit") return Link::logit;
  throw Error(ErrorCode::config, "unknown link '" + std::string(name) + "'");
}

PropensityModel PropensityModel::degenerate_all_participants(const PropensitySpec& spec,
                                                             std::vector<std::string> names) {
  PropensityModel m;
  m.link = spec.link;
  m.spec = spec;
  m.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()));
  m.names = std::move(names);
  m.converged = true;
  m.all_participants = true;
  return m;
}

namespace {

// Column accessor: -1 is the instrument, j >= 1 an x column.
int resolve_column(const Dataset& ds, const std::string& name) {
  if (name == ds.schema().instrument_col) return -1;
  const auto& cov = ds.schema().covariate_cols;
  for (std::size_t j = 0; j < cov.size(); ++j) {
    if (cov[j] == name) return static_cast<int>(j) + 1;
  }
  throw Error(ErrorCode::config, "propensity regressor '" + name + "' is not a loaded column");
}

double column_value(const Dataset& ds, int col, std::size_t i) {
  return col < 0 ? ds.z1()[i] : ds.x()(static_cast<Eigen::Index>(i), col);
}

struct DesignColumns {
  std::vector<std::string> names;
  std::vector<int> single;
  std::vector<std::pair<int, int>> products;
};

DesignColumns design_columns(const Dataset& ds, const PropensitySpec& spec) {
  DesignColumns dc;
  dc.names.push_back("(intercept)");
  dc.names.push_back(ds.schema().instrument_col);
  const auto& covs = spec.covariates ? *spec.covariates : ds.schema().covariate_cols;
  for (const auto& c : covs) {
    const int col = resolve_column(ds, c);
    if (col < 0) throw Error(ErrorCode::config, "instrument listed as a propensity covariate");
    dc.single.push_back(col);
    dc.names.push_back(c);
  }
  for (const auto& [a, b] : spec.interactions) {
    dc.products.emplace_back(resolve_column(ds, a), resolve_column(ds, b));
    dc.names.push_back(a + ":" + b);
  }
  return dc;
}

// log Phi(x) with an asymptotic branch far in the lower tail.
double log_ndtr(double x) {
  if (x > -30.0) return std::log(normal::cdf(x));
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * normal::kPi) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// phi(x) / Phi(x).
double mills_lower(double x) {
  if (x > -30.0) return normal::pdf(x) / normal::cdf(x);
  const double x2 = x * x;
  return -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2));
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;  // negative Hessian
};

Evaluation evaluate(Link link, const RowMatrix& z, const std::vector<double>& s,
                    const std::vector<double>& w, const Eigen::VectorXd& gamma, bool derivs) {
  const Eigen::Index k = z.cols();
  Evaluation ev;
  ev.grad = Eigen::VectorXd::Zero(k);
  if (derivs) ev.info = Eigen::MatrixXd::Zero(k, k);
  const Eigen::VectorXd eta = z * gamma;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double e = eta(i);
    const double wi = w[static_cast<std::size_t>(i)];
    const bool yes = s[static_cast<std::size_t>(i)] > 0.5;
    double score, curv;
    if (link == Link::probit) {
      // Sign flip maps the s=0 case onto the lower-tail ratio phi/Phi.
      const double q = yes ? e : -e;
      ev.loglik += wi * log_ndtr(q);
      const double lam = mills_lower(q);
      score = yes ? lam : -lam;
      curv = lam * (lam + q);
    } else {
      ev.loglik += wi * (yes ? log_sigmoid(e) : log_sigmoid(-e));
      const double p = sigmoid(e);
      score = (yes ? 1.0 : 0.0) - p;
      curv = p * (1.0 - p);
    }
    if (derivs) {
      ev.grad.noalias() += (wi * score) * z.row(i).transpose();
      ev.info.noalias() += (wi * curv) * z.row(i).transpose() * z.row(i);
    }
  }
  return ev;
}

}  // namespace

std::vector<std::string> propensity_names(const Dataset& ds, const PropensitySpec& spec) {
  return design_columns(ds, spec).names;
}

RowMatrix propensity_design(const Dataset& ds, const PropensitySpec& spec) {
  const DesignColumns dc = design_columns(ds, spec);
  RowMatrix z(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(dc.names.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::Index c = 0;
    z(r, c++) = 1.0;
    z(r, c++) = ds.z1()[i];
    for (int col : dc.single) z(r, c++) = column_value(ds, col, i);
    for (const auto& [a, b] : dc.products) z(r, c++) = column_value(ds, a, i) * column_value(ds, b, i);
  }
  return z;
}

PropensityModel fit_propensity(const Dataset& ds, int d, const PropensitySpec& spec,
                               std::span<const double> weights) {
  if (!weights.empty() && weights.size() != ds.size()) {
    throw Error(ErrorCode::domain, "weight vector length does not match the dataset");
  }
  const RowMatrix full = propensity_design(ds, spec);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    if (wi < 0.0 || !std::isfinite(wi)) throw Error(ErrorCode::domain, "weights must be finite and nonnegative");
    if (ds.d()[i] == d && wi > 0.0) rows.push_back(i);
  }
  const auto k = full.cols();
  RowMatrix z(static_cast<Eigen::Index>(rows.size()), k);
  std::vector<double> s, w;
  double n_yes = 0.0, n_no = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    z.row(static_cast<Eigen::Index>(r)) = full.row(static_cast<Eigen::Index>(rows[r]));
    s.push_back(ds.s()[rows[r]]);
    w.push_back(weights.empty() ? 1.0 : weights[rows[r]]);
    (s.back() > 0.5 ? n_yes : n_no) += 1.0;
  }
  const auto names = propensity_names(ds, spec);
  if (n_yes == 0.0 || n_no == 0.0) {
    throw Error(ErrorCode::separation, "group " + std::to_string(d) +
                                           " needs both participants and non-participants");
  }

  // Rank check on the weighted design.
  {
    RowMatrix zw = z;
    for (Eigen::Index i = 0; i < zw.rows(); ++i) zw.row(i) *= std::sqrt(w[static_cast<std::size_t>(i)]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zw);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
      std::vector<std::string> cols;
      const auto perm = qr.colsPermutation().indices();
      for (Eigen::Index j = qr.rank(); j < k; ++j) cols.push_back(names[static_cast<std::size_t>(perm(j))]);
      std::string list;
      for (const auto& c : cols) list += (list.empty() ? "" : ", ") + c;
      throw CollinearityError(cols, "propensity design is rank deficient; dependent columns: " + list);
    }
  }

  PropensityModel model;
  model.link = spec.link;
  model.spec = spec;
  model.names = names;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(k);
  Evaluation ev = evaluate(spec.link, z, s, w, gamma, true);
  constexpr int kMaxIter = 100;
  constexpr double kGradTol = 1e-8;
  int it = 0;
  for (; it < kMaxIter; ++it) {
    // Separation: the likelihood approaches its supremum of 0 only when every
    // fitted probability collapses onto the observed indicator.
    const Eigen::VectorXd eta = z * gamma;
    bool separated = true;
    for (Eigen::Index i = 0; i < eta.rows() && separated; ++i) {
      const double p = spec.link == Link::probit ? normal::cdf(eta(i)) : sigmoid(eta(i));
      separated = std::abs(p - s[static_cast<std::size_t>(i)]) < 1e-8;
    }
    if (separated || gamma.lpNorm<Eigen::Infinity>() > 1e4) {
      throw Error(ErrorCode::separation,
                  "participation is perfectly predicted in group " + std::to_string(d) +
                      "; the likelihood has no finite maximum");
    }
    if (ev.grad.lpNorm<Eigen::Infinity>() < kGradTol) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd step = ev.info.ldlt().solve(ev.grad);
    double scale = 1.0;
    Evaluation next;
    bool improved = false;
    // Rounding in the summed loglik is tolerated so that steps near the
    // optimum, whose true gain is below machine resolution, still count.
    const double slack = 1e-12 * (1.0 + std::abs(ev.loglik));
    for (int h = 0; h < 40; ++h, scale *= 0.5) {
      next = evaluate(spec.link, z, s, w, gamma + scale * step, false);
      if (next.loglik >= ev.loglik - slack) {
        improved = true;
        break;
      }
    }
    if (!improved) break;
    gamma += scale * step;
    ev = evaluate(spec.link, z, s, w, gamma, true);
  }
  model.gamma = gamma;
  model.loglik = ev.loglik;
  model.iterations = it;
  if (!model.converged) {
    throw ConvergenceError(std::vector<double>(gamma.data(), gamma.data() + gamma.size()),
                           "propensity Newton iterations did not converge in group " +
                               std::to_string(d));
  }
  return model;
}

double predict(const PropensityModel& model, std::span<const double> z) {
  if (z.size() != static_cast<std::size_t>(model.gamma.size())) {
    throw Error(ErrorCode::domain, "regressor vector length does not match the propensity model");
  }
  if (model.all_participants) return 1.0;
  double eta = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) eta += z[j] * model.gamma(static_cast<Eigen::Index>(j));
  const double p = model.link == Link::probit ? normal::cdf(eta) : sigmoid(eta);
  return std::clamp(p, kPropensityClamp, 1.0 - kPropensityClamp);
}

std::vector<double> predict_rows(const PropensityModel& model, const Dataset& ds) {
  const RowMatrix z = propensity_design(ds, model.spec);
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = z.row(static_cast<Eigen::Index>(i));
    out[i] = predict(model, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return out;
}

}  // namespace qrs
