#include "qrs/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "qrs/error.hpp"

namespace qrs {

CfIndex CfIndex::parse(std::string_view label) {
  if (label.size() != 4) throw Error(ErrorCode::config, "counterfactual index must have four digits: '" + std::string(label) + "'");
  int v[4];
  for (int q = 0; q < 4; ++q) {
    const char c = label[static_cast<std::size_t>(q)];
    if (c != '0' && c != '1') throw Error(ErrorCode::config, "counterfactual index digits must be 0 or 1: '" + std::string(label) + "'");
    v[q] = c - '0';
  }
  return {v[0], v[1], v[2], v[3]};
}

std::string CfIndex::label() const {
  return std::string{static_cast<char>('0' + h), static_cast<char>('0' + k), static_cast<char>('0' + l),
                     static_cast<char>('0' + m)};
}

void CfIndex::validate() const {
  for (int v : {h, k, l, m}) {
    if (v != 0 && v != 1) throw Error(ErrorCode::config, "counterfactual index entries must be 0 or 1");
  }
}

namespace {

constexpr std::pair<CfKind, std::string_view> kKindNames[] = {
    {CfKind::mean_participants, "mean_participants"},
    {CfKind::mean_population, "mean_population"},
    {CfKind::cdf_participants, "cdf_participants"},
    {CfKind::cdf_population, "cdf_population"},
    {CfKind::quantile_participants, "quantile_participants"},
    {CfKind::quantile_population, "quantile_population"},
    {CfKind::mean_propensity, "mean_propensity"},
    {CfKind::mean_u, "mean_u"},
    {CfKind::potential_mean, "potential_mean"},
    {CfKind::potential_cdf, "potential_cdf"},
    {CfKind::potential_quantile, "potential_quantile"},
};

}  // namespace

std::string_view to_string(CfKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

CfKind parse_cf_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw Error(ErrorCode::config, "unknown statistic '" + std::string(name) + "'");
}

bool kind_takes_argument(CfKind kind) {
  switch (kind) {
    case CfKind::cdf_participants:
    case CfKind::cdf_population:
    case CfKind::quantile_participants:
    case CfKind::quantile_population:
    case CfKind::potential_cdf:
    case CfKind::potential_quantile: return true;
    default: return false;
  }
}

void CfStat::validate() const {
  if (kind_takes_argument(kind) != arg.has_value()) {
    throw Error(ErrorCode::config, std::string("statistic ") + std::string(to_string(kind)) +
                                       (arg ? " takes no argument" : " requires an argument"));
  }
  if (arg && !std::isfinite(*arg)) throw Error(ErrorCode::config, "statistic argument must be finite");
}

std::string CfStat::label() const {
  std::string s(to_string(kind));
  if (arg) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "@%.6g", *arg);
    s += buf;
  }
  return s;
}

CfStat CfStat::parse(std::string_view label) {
  CfStat stat;
  const auto at = label.find('@');
  stat.kind = parse_cf_kind(label.substr(0, at));
  if (at != std::string_view::npos) {
    const std::string text(label.substr(at + 1));
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0') throw Error(ErrorCode::config, "bad statistic argument in '" + std::string(label) + "'");
    stat.arg = v;
  }
  stat.validate();
  return stat;
}

CfTarget target_of(CfKind kind) {
  switch (kind) {
    case CfKind::mean_population:
    case CfKind::cdf_population:
    case CfKind::quantile_population: return CfTarget::population;
    case CfKind::potential_mean:
    case CfKind::potential_cdf:
    case CfKind::potential_quantile: return CfTarget::potential;
    default: return CfTarget::participants;
  }
}

CfDistribution::CfDistribution(std::vector<std::pair<double, double>> atoms, double total_weight, double floor,
                               double zero_mass, bool population, double eps)
    : floor_(floor), zero_mass_(zero_mass), population_(population), eps_(eps) {
  if (!(total_weight > 0.0)) throw Error(ErrorCode::domain, "counterfactual group carries no weight");
  if (population) atoms.emplace_back(0.0, 0.0);
  std::sort(atoms.begin(), atoms.end());
  double acc = 0.0;
  for (const auto& [v, w] : atoms) {
    acc += w;
    if (!values_.empty() && values_.back() == v) {
      cum_.back() = acc / total_weight;
    } else {
      values_.push_back(v);
      cum_.push_back(acc / total_weight);
    }
  }
}

double CfDistribution::cdf(double y) const {
  const auto it = std::upper_bound(values_.begin(), values_.end(), y);
  double f = floor_;
  if (it != values_.begin()) f += cum_[static_cast<std::size_t>(it - values_.begin()) - 1];
  if (population_ && y >= 0.0) f += zero_mass_;
  return f;
}

double CfDistribution::quantile(double tau) const {
  if (!(tau > eps_ && tau < 1.0 - eps_)) {
    throw Error(ErrorCode::trimming, "quantile level " + std::to_string(tau) + " lies outside (" +
                                         std::to_string(eps_) + ", " + std::to_string(1.0 - eps_) + ")");
  }
  // cdf over the ascending candidates is nondecreasing, so bisect.
  std::size_t lo = 0, hi = values_.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (cdf(values_[mid]) >= tau) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo < values_.size() ? values_[lo] : values_.back();
}

std::vector<double> CfDistribution::candidates() const { return values_; }

void check_compatible(const FitPair& fits, const Dataset& ds) {
  for (int d = 0; d < 2; ++d) {
    const QrsFit& f = fits[static_cast<std::size_t>(d)];
    if (f.group != d) throw Error(ErrorCode::config, "fit pair is not ordered by group");
    if (static_cast<std::size_t>(f.beta.cols()) != ds.dim()) {
      throw Error(ErrorCode::config, "fit dimension does not match the dataset");
    }
    if (static_cast<std::size_t>(f.beta.rows()) != f.grid.size()) {
      throw Error(ErrorCode::config, "fit coefficient rows do not match its grid");
    }
    if (f.pi_hat.size() != ds.size()) throw Error(ErrorCode::config, "fit propensities do not match the dataset");
  }
  if (!(fits[0].grid == fits[1].grid)) throw Error(ErrorCode::config, "fits use different quantile grids");
}

CfEngine::CfEngine(const FitPair& fits, const Dataset& ds, CfOptions options)
    : fits_(fits), ds_(ds), options_(options) {
  check_compatible(fits, ds);
  if (!options.weights.empty() && options.weights.size() != ds.size()) {
    throw Error(ErrorCode::domain, "weight vector length does not match the dataset");
  }
  eps_ = fits[0].grid.eps;
  edges_ = fits[0].grid.edges();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int d = ds.d()[i];
    rows_[static_cast<std::size_t>(d)].push_back(i);
    w_[static_cast<std::size_t>(d)].push_back(options.weights.empty() ? 1.0 : options.weights[i]);
  }
}

double CfEngine::total_weight(int h) {
  double w = 0.0;
  for (double v : w_[static_cast<std::size_t>(h)]) w += v;
  if (!(w > 0.0)) throw Error(ErrorCode::domain, "group " + std::to_string(h) + " carries no weight");
  return w;
}

const std::vector<double>& CfEngine::pi(int h, int m) {
  auto [it, fresh] = pi_.try_emplace({h, m});
  if (fresh) {
    const auto& rows = rows_[static_cast<std::size_t>(h)];
    const auto& ph = fits_[static_cast<std::size_t>(m)].pi_hat;
    it->second.reserve(rows.size());
    for (std::size_t i : rows) it->second.push_back(ph[i]);
  }
  return it->second;
}

const CfEngine::Matrix& CfEngine::fitted(int h, int k) {
  auto [it, fresh] = fitted_.try_emplace({h, k});
  if (!fresh) return it->second;
  Matrix& g = it->second;
  const auto& rows = rows_[static_cast<std::size_t>(h)];
  const Eigen::MatrixXd& beta = fits_[static_cast<std::size_t>(k)].beta;
  g.rows = rows.size();
  g.cols = static_cast<std::size_t>(beta.rows());
  g.data.resize(g.rows * g.cols);
  const auto kk = beta.cols();
  for (std::size_t r = 0; r < g.rows; ++r) {
    const auto xi = ds_.x().row(static_cast<Eigen::Index>(rows[r]));
    double* out = g.data.data() + r * g.cols;
    for (std::size_t j = 0; j < g.cols; ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < kk; ++c) s += xi(c) * beta(static_cast<Eigen::Index>(j), c);
      out[j] = s;
    }
    if (options_.rearrange) std::sort(out, out + g.cols);
  }
  return g;
}

const CfEngine::Matrix& CfEngine::increments(int h, int l, int m, CfTarget target) {
  const int t = static_cast<int>(target);
  auto [it, fresh] = increments_.try_emplace({h, l, m, t});
  if (!fresh) return it->second;
  Matrix& inc = it->second;
  const auto& p = pi(h, m);
  const std::size_t nj = edges_.size() - 1;
  inc.rows = p.size();
  inc.cols = nj;
  inc.data.resize(inc.rows * nj);
  const CopulaSpec& cop = fits_[static_cast<std::size_t>(l)].copula;
  if (target == CfTarget::participants) {
    std::vector<double> g(edges_.size() * p.size());
    conditional_given_selection_grid(cop, edges_, p, g);
    for (std::size_t i = 0; i < p.size(); ++i) {
      double* out = inc.data.data() + i * nj;
      for (std::size_t j = 0; j < nj; ++j) out[j] = g[(j + 1) * p.size() + i] - g[j * p.size() + i];
    }
  } else {
    std::vector<double> c(edges_.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      cdf_row(cop, p[i], edges_, c);
      double* out = inc.data.data() + i * nj;
      for (std::size_t j = 0; j < nj; ++j) out[j] = c[j + 1] - c[j];
    }
  }
  return inc;
}

double CfEngine::mean(const CfIndex& idx, CfTarget target) {
  idx.validate();
  const Matrix& g = fitted(idx.h, idx.k);
  const auto& w = w_[static_cast<std::size_t>(idx.h)];
  double total = 0.0;
  if (target == CfTarget::potential) {
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double* gi = g.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) s += gi[j] * (edges_[j + 1] - edges_[j]);
      total += w[i] * s;
    }
  } else {
    const Matrix& inc = increments(idx.h, idx.l, idx.m, target);
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double* gi = g.row(i);
      const double* di = inc.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) s += gi[j] * di[j];
      total += w[i] * s;
    }
  }
  return total / total_weight(idx.h);
}

double CfEngine::mean_propensity(int h, int m) {
  CfIndex{h, 0, 0, m}.validate();
  const auto& p = pi(h, m);
  const auto& w = w_[static_cast<std::size_t>(h)];
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += w[i] * p[i];
  return total / total_weight(h);
}

double CfEngine::mean_u(int h, int l, int m) {
  CfIndex{h, 0, l, m}.validate();
  const Matrix& inc = increments(h, l, m, CfTarget::participants);
  const auto& w = w_[static_cast<std::size_t>(h)];
  const auto& tau = fits_[0].grid.points;
  double total = 0.0;
  for (std::size_t i = 0; i < inc.rows; ++i) {
    const double* di = inc.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < inc.cols; ++j) s += tau[j] * di[j];
    total += w[i] * s;
  }
  return total / total_weight(h);
}

const CfDistribution& CfEngine::distribution(const CfIndex& idx, CfTarget target) {
  idx.validate();
  const bool potential = target == CfTarget::potential;
  const std::array<int, 5> key{idx.h, idx.k, potential ? -1 : idx.l, potential ? -1 : idx.m, static_cast<int>(target)};
  auto it = dists_.find(key);
  if (it != dists_.end()) return *it->second;

  const Matrix& g = fitted(idx.h, idx.k);
  const auto& w = w_[static_cast<std::size_t>(idx.h)];
  const double wt = total_weight(idx.h);
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(g.rows * g.cols);
  double zero_mass = 0.0;
  if (potential) {
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double* gi = g.row(i);
      for (std::size_t j = 0; j < g.cols; ++j) atoms.emplace_back(gi[j], w[i] * (edges_[j + 1] - edges_[j]));
    }
  } else {
    const Matrix& inc = increments(idx.h, idx.l, idx.m, target);
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double* gi = g.row(i);
      const double* di = inc.row(i);
      for (std::size_t j = 0; j < g.cols; ++j) atoms.emplace_back(gi[j], w[i] * di[j]);
    }
    if (target == CfTarget::population) {
      const auto& p = pi(idx.h, idx.m);
      double non = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) non += w[i] * (1.0 - p[i]);
      zero_mass = eps_ + non / wt;
    }
  }
  const bool population = target == CfTarget::population;
  auto dist = std::make_unique<CfDistribution>(std::move(atoms), wt, population ? 0.0 : eps_, zero_mass,
                                               population, eps_);
  return *dists_.emplace(key, std::move(dist)).first->second;
}

double CfEngine::value(const CfIndex& idx, const CfStat& stat) {
  stat.validate();
  idx.validate();
  switch (stat.kind) {
    case CfKind::mean_participants: return mean(idx, CfTarget::participants);
    case CfKind::mean_population: return mean(idx, CfTarget::population);
    case CfKind::potential_mean: return mean(idx, CfTarget::potential);
    case CfKind::cdf_participants:
    case CfKind::cdf_population:
    case CfKind::potential_cdf: return distribution(idx, target_of(stat.kind)).cdf(*stat.arg);
    case CfKind::quantile_participants:
    case CfKind::quantile_population:
    case CfKind::potential_quantile: return distribution(idx, target_of(stat.kind)).quantile(*stat.arg);
    case CfKind::mean_propensity: return mean_propensity(idx.h, idx.m);
    case CfKind::mean_u: return mean_u(idx.h, idx.l, idx.m);
  }
  throw Error(ErrorCode::internal, "unhandled statistic");
}

double cf_mean_participants(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o) {
  return CfEngine(fits, ds, o).mean(idx, CfTarget::participants);
}

double cf_mean_population(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o) {
  return CfEngine(fits, ds, o).mean(idx, CfTarget::population);
}

double cf_cdf_participants(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double y, CfOptions o) {
  return CfEngine(fits, ds, o).distribution(idx, CfTarget::participants).cdf(y);
}

double cf_cdf_population(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double y, CfOptions o) {
  return CfEngine(fits, ds, o).distribution(idx, CfTarget::population).cdf(y);
}

double cf_quantile(const FitPair& fits, const Dataset& ds, const CfIndex& idx, double tau, CfTarget target,
                   CfOptions o) {
  if (target == CfTarget::potential) throw Error(ErrorCode::config, "use potential_stat for potential outcomes");
  return CfEngine(fits, ds, o).distribution(idx, target).quantile(tau);
}

double cf_mean_propensity(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o) {
  return CfEngine(fits, ds, o).mean_propensity(idx.h, idx.m);
}

double cf_mean_u(const FitPair& fits, const Dataset& ds, const CfIndex& idx, CfOptions o) {
  return CfEngine(fits, ds, o).mean_u(idx.h, idx.l, idx.m);
}

double potential_stat(const FitPair& fits, const Dataset& ds, int h, int k, const CfStat& stat, CfOptions o) {
  if (target_of(stat.kind) != CfTarget::potential) {
    throw Error(ErrorCode::config, "potential_stat requires a potential_* statistic");
  }
  return CfEngine(fits, ds, o).value({h, k, 0, 0}, stat);
}

}  // namespace qrs
