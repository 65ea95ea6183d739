#include "qrs/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>

#include "qrs/error.hpp"
#include "qrs/parallel.hpp"

namespace qrs {

namespace {

// Linear interpolation between order statistics at position p (n - 1).
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string_view to_string(WeightLaw law) {
  switch (law) {
    case WeightLaw::exponential_unit_mean: return "exponential_unit_mean";
    case WeightLaw::unit: return "unit";
  }
  return "unknown";
}

WeightLaw parse_weight_law(std::string_view name) {
  if (name == "exponential_unit_mean" || name == "exponential") return WeightLaw::exponential_unit_mean;
  if (name == "unit") return WeightLaw::unit;
  throw Error(ErrorCode::config, "unknown weight law '" + std::string(name) + "'");
}

void BootstrapConfig::validate() const {
  if (replications < 2) throw Error(ErrorCode::config, "bootstrap needs at least 2 replications");
  const double expected = law == WeightLaw::unit ? 0.0 : 1.0;
  if (omega0 != expected) {
    throw Error(ErrorCode::config, "omega0 must equal the variance of the " + std::string(to_string(law)) + " law");
  }
  if (!(max_failure_share >= 0.0 && max_failure_share < 1.0)) {
    throw Error(ErrorCode::config, "max_failure_share must lie in [0, 1)");
  }
}

std::vector<double> draw_weights(std::size_t n, Rng& rng, WeightLaw law) {
  if (n == 0) throw Error(ErrorCode::domain, "weight vector length must be positive");
  std::vector<double> w(n, 1.0);
  if (law == WeightLaw::exponential_unit_mean) {
    for (double& v : w) v = rng.exponential();
  }
  return w;
}

double iqr_variance(std::span<const double> draws) {
  if (draws.size() < 4) {
    throw Error(ErrorCode::insufficient_draws, "iqr variance needs at least 4 draws, got " + std::to_string(draws.size()));
  }
  std::vector<double> v(draws.begin(), draws.end());
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::domain, "bootstrap draws must be finite");
  }
  std::sort(v.begin(), v.end());
  const double spread = (sorted_quantile(v, 0.75) - sorted_quantile(v, 0.25)) / kNormalIqr;
  return spread * spread;
}

std::string stars(double estimate, double se) {
  if (!(se > 0.0) || !std::isfinite(se) || !std::isfinite(estimate)) return "";
  const double z = std::abs(estimate / se);
  if (z > 2.576) return "***";
  if (z > 1.96) return "**";
  if (z > 1.645) return "*";
  return "";
}

bool KsResult::reject(double level) const {
  for (std::size_t a = 0; a < kKsLevels.size(); ++a) {
    if (std::abs(kKsLevels[a] - level) < 1e-12) return statistic > critical[a];
  }
  throw Error(ErrorCode::config, "KS critical values exist only at the 90, 95 and 99 percent levels");
}

KsResult ks_test(const std::vector<std::vector<double>>& draws, std::span<const double> point,
                 std::span<const double> hypothesis) {
  const std::size_t g = point.size();
  if (hypothesis.size() != g) throw Error(ErrorCode::domain, "hypothesis and point processes differ in length");
  if (draws.size() < 4) {
    throw Error(ErrorCode::insufficient_draws, "KS test needs at least 4 bootstrap draws");
  }
  for (const auto& row : draws) {
    if (row.size() != g) throw Error(ErrorCode::domain, "bootstrap draw length does not match the grid");
  }
  KsResult out;
  std::vector<double> scale(g, 0.0);
  std::vector<double> column(draws.size());
  for (std::size_t c = 0; c < g; ++c) {
    for (std::size_t j = 0; j < draws.size(); ++j) column[j] = draws[j][c];
    const double v = iqr_variance(column);
    if (v > 0.0) {
      scale[c] = 1.0 / std::sqrt(v);
    } else {
      out.dropped.push_back(c);
    }
  }
  if (out.dropped.size() == g) throw Error(ErrorCode::degenerate_test, "every bootstrap variance is zero");

  for (std::size_t c = 0; c < g; ++c) {
    if (scale[c] > 0.0) out.statistic = std::max(out.statistic, std::abs(point[c] - hypothesis[c]) * scale[c]);
  }
  out.sup_draws.resize(draws.size());
  for (std::size_t j = 0; j < draws.size(); ++j) {
    double sup = 0.0;
    for (std::size_t c = 0; c < g; ++c) {
      if (scale[c] > 0.0) sup = std::max(sup, std::abs(draws[j][c] - point[c]) * scale[c]);
    }
    out.sup_draws[j] = sup;
  }
  std::vector<double> sorted = out.sup_draws;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t a = 0; a < kKsLevels.size(); ++a) {
    // Left inverse of the empirical distribution.
    const auto rank = static_cast<std::size_t>(std::ceil(kKsLevels[a] * static_cast<double>(sorted.size()) - 1e-9));
    out.critical[a] = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  }
  return out;
}

FitPair fit_pair(const Dataset& ds, const QrsConfig& cfg, std::span<const double> weights) {
  return FitPair{fit_group(ds, 0, cfg, weights), fit_group(ds, 1, cfg, weights)};
}

std::vector<DecompResult> evaluate_requests(const FitPair& fits, const Dataset& ds,
                                            std::span<const DecompRequest> requests, CfOptions options) {
  for (const auto& r : requests) r.validate();
  CfEngine engine(fits, ds, options);
  std::vector<DecompResult> out;
  out.reserve(requests.size());
  for (const auto& r : requests) out.push_back(evaluate(engine, r));
  return out;
}

BootstrapResult bootstrap_run(const Dataset& ds, const QrsConfig& qrs, const BootstrapConfig& boot,
                              std::span<const DecompRequest> requests, const DrawSink& sink, bool rearrange) {
  qrs.validate();
  boot.validate();
  for (const auto& r : requests) r.validate();
  const std::size_t jn = boot.replications;
  QrsConfig inner = qrs;
  if (boot.workers > 1) inner.workers = 1;

  std::vector<std::optional<std::vector<DecompResult>>> results(jn);
  std::vector<std::optional<std::string>> errors(jn);
  std::vector<bool> done(jn, false);
  std::size_t flushed = 0;
  std::mutex mutex;

  parallel_for(jn, boot.workers, [&](std::size_t j) {
    try {
      Rng rng = Rng::for_stream(boot.seed, j);
      const std::vector<double> w = draw_weights(ds.size(), rng, boot.law);
      const FitPair fits = fit_pair(ds, inner, w);
      results[j] = evaluate_requests(fits, ds, requests, CfOptions{w, rearrange});
    } catch (const Error& e) {
      errors[j] = e.what();
    }
    std::lock_guard lock(mutex);
    done[j] = true;
    for (; flushed < jn && done[flushed]; ++flushed) {
      if (sink && results[flushed]) sink(flushed, *results[flushed]);
    }
  });

  BootstrapResult out;
  out.requested = jn;
  for (std::size_t j = 0; j < jn; ++j) {
    if (errors[j]) out.failures.push_back({j, *errors[j]});
  }
  if (static_cast<double>(out.failures.size()) > boot.max_failure_share * static_cast<double>(jn)) {
    throw Error(ErrorCode::insufficient_draws,
                std::to_string(out.failures.size()) + " of " + std::to_string(jn) +
                    " bootstrap replications failed; first failure: " + out.failures.front().message);
  }
  for (std::size_t r = 0; r < requests.size(); ++r) {
    BootstrapDraws d;
    d.request = requests[r];
    for (std::size_t j = 0; j < jn; ++j) {
      if (!results[j]) continue;
      const auto& res = (*results[j])[r];
      if (d.entry_names.empty()) {
        d.entry_names = res.entry_names();
        d.values.resize(d.entry_names.size());
      }
      const auto e = res.entries();
      for (std::size_t c = 0; c < e.size(); ++c) d.values[c].push_back(e[c]);
    }
    out.draws.push_back(std::move(d));
  }
  for (std::size_t j = 0; j < jn; ++j) {
    if (results[j]) out.replications.push_back(j);
  }
  return out;
}

void attach_inference(std::vector<DecompResult>& point, const BootstrapResult& boot) {
  for (auto& res : point) {
    const auto it = std::find_if(boot.draws.begin(), boot.draws.end(), [&](const BootstrapDraws& d) {
      return d.request.kind == res.kind && (res.kind == DecompKind::participation ||
                                            res.kind == DecompKind::selection || d.request.stat == res.statistic);
    });
    if (it == boot.draws.end()) continue;
    const auto e = res.entries();
    std::vector<double> se(e.size());
    std::vector<std::string> st(e.size());
    for (std::size_t c = 0; c < e.size() && c < it->values.size(); ++c) {
      se[c] = std::sqrt(iqr_variance(it->values[c]));
      st[c] = stars(e[c], se[c]);
    }
    res.se = std::move(se);
    res.stars = std::move(st);
  }
}

}  // namespace qrs
