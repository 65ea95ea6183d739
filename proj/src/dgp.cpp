#include "qrs/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qrs/error.hpp"
#include "qrs/normal.hpp"
#include "qrs/parallel.hpp"
#include "qrs/rng.hpp"

namespace qrs {

DgpSpec DgpSpec::defaults() {
  DgpSpec s;
  for (int d = 0; d < 2; ++d) {
    DgpGroup& g = s.groups[static_cast<std::size_t>(d)];
    g.intercept = 1.0;
    g.scale = 1.0;
    g.slopes = Eigen::VectorXd::Constant(1, 0.5);
    g.gamma = Eigen::Vector3d(d == 0 ? 0.3 : 0.0, -0.4, 0.8);
    g.link = Link::probit;
    g.copula = CopulaSpec::frank(d == 0 ? -5.0 : -2.0);
  }
  return s;
}

Eigen::VectorXd DgpSpec::beta(int d, double tau) const {
  const DgpGroup& g = groups[static_cast<std::size_t>(d)];
  Eigen::VectorXd b(1 + g.slopes.size());
  b(0) = g.intercept + g.scale * normal::quantile(tau);
  b.tail(g.slopes.size()) = g.slopes;
  return b;
}

double DgpSpec::sqf(int d, std::span<const double> x, double tau) const {
  const DgpGroup& g = groups[static_cast<std::size_t>(d)];
  double v = g.intercept + g.scale * normal::quantile(tau);
  for (std::size_t c = 0; c < x.size(); ++c) v += g.slopes(static_cast<Eigen::Index>(c)) * x[c];
  return v;
}

double DgpSpec::propensity(int d, double z1, std::span<const double> x) const {
  const DgpGroup& g = groups[static_cast<std::size_t>(d)];
  double eta = g.gamma(0) + g.gamma(1) * z1;
  for (std::size_t c = 0; c < x.size(); ++c) eta += g.gamma(static_cast<Eigen::Index>(c + 2)) * x[c];
  return g.link == Link::probit ? normal::cdf(eta) : 1.0 / (1.0 + std::exp(-eta));
}

namespace {

// Corners of the covariate box, which bound any linear index.
std::vector<std::vector<double>> corners(const CovariateLaw& law) {
  std::vector<std::vector<double>> out{{}};
  for (std::size_t c = 0; c < law.x_lo.size(); ++c) {
    std::vector<std::vector<double>> next;
    for (const auto& p : out) {
      for (double v : {law.x_lo[c], law.x_hi[c]}) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

void DgpSpec::validate() const {
  const std::size_t p = dim();
  for (int d = 0; d < 2; ++d) {
    const auto du = static_cast<std::size_t>(d);
    const DgpGroup& g = groups[du];
    const CovariateLaw& law = covariates[du];
    const std::string tag = "group " + std::to_string(d) + ": ";
    if (law.x_lo.size() != p || law.x_hi.size() != p) throw Error(ErrorCode::spec, tag + "covariate dimensions differ");
    if (static_cast<std::size_t>(g.slopes.size()) != p) throw Error(ErrorCode::spec, tag + "slope count does not match covariates");
    if (static_cast<std::size_t>(g.gamma.size()) != p + 2) throw Error(ErrorCode::spec, tag + "gamma must cover (1, z1, x)");
    if (law.z1_values.empty() || law.z1_values.size() != law.z1_probs.size()) {
      throw Error(ErrorCode::spec, tag + "instrument law is malformed");
    }
    const double total = std::accumulate(law.z1_probs.begin(), law.z1_probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9 || std::any_of(law.z1_probs.begin(), law.z1_probs.end(), [](double q) { return q < 0.0; })) {
      throw Error(ErrorCode::spec, tag + "instrument probabilities must be nonnegative and sum to 1");
    }
    for (std::size_t c = 0; c < p; ++c) {
      if (!(law.x_lo[c] < law.x_hi[c])) throw Error(ErrorCode::spec, tag + "covariate range is empty");
    }
    if (n[du] == 0) throw Error(ErrorCode::spec, tag + "sample size must be positive");

    // Monotonicity on a tau grid ten times finer than the estimation grid.
    const auto xs = corners(law);
    for (const auto& x : xs) {
      double prev = -INFINITY;
      for (int j = 1; j < 1000; ++j) {
        const double v = sqf(d, x, j / 1000.0);
        if (!(v > prev)) throw Error(ErrorCode::spec, tag + "structural quantile function is not increasing in tau");
        prev = v;
      }
    }
    for (double z1 : law.z1_values) {
      for (const auto& x : xs) {
        const double pr = propensity(d, z1, x);
        if (!(pr > 0.02 && pr < 0.98)) {
          throw Error(ErrorCode::spec, tag + "propensity " + std::to_string(pr) + " leaves (0.02, 0.98) on the support");
        }
      }
    }
  }
}

Schema simulation_schema(std::size_t dim) {
  Schema s;
  s.outcome_col = "y";
  s.selection_col = "s";
  s.group_col = "d";
  s.instrument_col = "z1";
  for (std::size_t c = 0; c < dim; ++c) s.covariate_cols.push_back("x" + std::to_string(c + 1));
  return s;
}

namespace {

double draw_z1(const CovariateLaw& law, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t q = 0; q < law.z1_values.size(); ++q) {
    acc += law.z1_probs[q];
    if (u < acc) return law.z1_values[q];
  }
  return law.z1_values.back();
}

void draw_x(const CovariateLaw& law, Rng& rng, std::vector<double>& x) {
  x.resize(law.x_lo.size());
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = rng.uniform(law.x_lo[c], law.x_hi[c]);
}

}  // namespace

Simulation simulate_with_latent(const DgpSpec& spec) {
  spec.validate();
  const std::size_t p = spec.dim();
  const std::size_t n = spec.n[0] + spec.n[1];
  std::vector<double> y(n), z1(n);
  std::vector<std::uint8_t> s(n), d(n);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
  Simulation sim;
  sim.u.resize(n);
  sim.v.resize(n);
  std::size_t row = 0;
  std::vector<double> xi;
  for (int g = 0; g < 2; ++g) {
    const auto gu = static_cast<std::size_t>(g);
    Rng rng = Rng::for_stream(spec.seed, gu);
    const CopulaSpec& cop = spec.groups[gu].copula;
    for (std::size_t r = 0; r < spec.n[gu]; ++r, ++row) {
      z1[row] = draw_z1(spec.covariates[gu], rng);
      draw_x(spec.covariates[gu], rng, xi);
      const double v = rng.uniform();
      const double u = inverse_conditional_given_v(cop, rng.uniform(), v);
      const bool part = spec.propensity(g, z1[row], xi) > v;
      d[row] = static_cast<std::uint8_t>(g);
      s[row] = part ? 1 : 0;
      y[row] = part ? spec.sqf(g, xi, u) : 0.0;
      x(static_cast<Eigen::Index>(row), 0) = 1.0;
      for (std::size_t c = 0; c < p; ++c) x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c + 1)) = xi[c];
      sim.u[row] = u;
      sim.v[row] = v;
    }
  }
  sim.data = Dataset(simulation_schema(p), std::move(y), std::move(s), std::move(d), std::move(z1), std::move(x));
  return sim;
}

Dataset simulate(const DgpSpec& spec) { return simulate_with_latent(spec).data; }

namespace {

constexpr std::size_t kBatches = 20;

struct Draw {
  double pi;    // propensity of the m group at the drawn z
  double u;     // latent rank
  bool part;    // participation (population target)
  bool inside;  // u within the trimmed range
  double g;     // outcome at u
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

double sd_of_mean(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double a : v) ss += (a - m) * (a - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Left-inverse of y -> floor + #(atoms <= y)/n (+ zero mass for y >= 0).
double oracle_quantile(std::vector<double> atoms, std::size_t n, double floor, double zero_mass, bool population,
                       double tau) {
  std::sort(atoms.begin(), atoms.end());
  if (population) {
    const auto zpos = static_cast<std::size_t>(std::upper_bound(atoms.begin(), atoms.end(), 0.0) - atoms.begin());
    // Below zero: only atoms; at zero the non-participation mass joins.
    for (std::size_t q = 0; q < zpos; ++q) {
      if (floor + static_cast<double>(q + 1) / static_cast<double>(n) >= tau) return atoms[q];
    }
    if (floor + zero_mass + static_cast<double>(zpos) / static_cast<double>(n) >= tau) return 0.0;
    for (std::size_t q = zpos; q < atoms.size(); ++q) {
      if (floor + zero_mass + static_cast<double>(q + 1) / static_cast<double>(n) >= tau) return atoms[q];
    }
    return atoms.empty() ? 0.0 : std::max(atoms.back(), 0.0);
  }
  for (std::size_t q = 0; q < atoms.size(); ++q) {
    if (floor + static_cast<double>(q + 1) / static_cast<double>(n) >= tau) return atoms[q];
  }
  return atoms.empty() ? 0.0 : atoms.back();
}

}  // namespace

OracleValue true_counterfactual(const DgpSpec& spec, const CfIndex& idx, const CfStat& stat, std::size_t mc_n,
                                double eps, std::uint64_t seed) {
  spec.validate();
  idx.validate();
  stat.validate();
  if (mc_n < 100000) throw Error(ErrorCode::spec, "oracle requires at least 1e5 Monte Carlo draws");
  const CfTarget target = target_of(stat.kind);
  if ((stat.kind == CfKind::quantile_participants || stat.kind == CfKind::quantile_population ||
       stat.kind == CfKind::potential_quantile) &&
      !(*stat.arg > eps && *stat.arg < 1.0 - eps)) {
    throw Error(ErrorCode::trimming, "quantile level outside the trimmed range");
  }
  const CovariateLaw& law = spec.covariates[static_cast<std::size_t>(idx.h)];
  const CopulaSpec& cop = spec.groups[static_cast<std::size_t>(idx.l)].copula;
  const std::size_t per = mc_n / kBatches;

  std::vector<std::vector<Draw>> draws(kBatches);
  parallel_for(kBatches, 1, [&](std::size_t b) {
    Rng rng = Rng::for_stream(seed, b);
    std::vector<double> x;
    auto& out = draws[b];
    out.reserve(per);
    for (std::size_t r = 0; r < per; ++r) {
      const double z1 = draw_z1(law, rng);
      draw_x(law, rng, x);
      Draw dr{};
      dr.pi = spec.propensity(idx.m, z1, x);
      if (target == CfTarget::potential) {
        dr.u = rng.uniform();
        dr.part = true;
      } else if (target == CfTarget::participants) {
        // V uniform on (0, pi), then U from the copula given V.
        const double v = dr.pi * rng.uniform();
        dr.u = inverse_conditional_given_v(cop, rng.uniform(), v);
        dr.part = true;
      } else {
        const double v = rng.uniform();
        dr.u = inverse_conditional_given_v(cop, rng.uniform(), v);
        dr.part = v < dr.pi;
      }
      dr.inside = dr.u >= eps && dr.u <= 1.0 - eps;
      dr.g = spec.sqf(idx.k, x, dr.u);
      out.push_back(dr);
    }
  });

  const bool is_quantile = stat.kind == CfKind::quantile_participants || stat.kind == CfKind::quantile_population ||
                           stat.kind == CfKind::potential_quantile;
  auto batch_value = [&](const std::vector<const Draw*>& ds) {
    const double nn = static_cast<double>(ds.size());
    if (is_quantile) {
      std::vector<double> atoms;
      double non = 0.0;
      for (const Draw* d : ds) {
        if (d->part && d->inside) atoms.push_back(d->g);
        non += 1.0 - d->pi;
      }
      const bool pop = stat.kind == CfKind::quantile_population;
      return oracle_quantile(std::move(atoms), ds.size(), pop ? 0.0 : eps, pop ? eps + non / nn : 0.0, pop, *stat.arg);
    }
    double s = 0.0;
    for (const Draw* d : ds) {
      switch (stat.kind) {
        case CfKind::mean_participants:
        case CfKind::mean_population:
        case CfKind::potential_mean: s += (d->part && d->inside) ? d->g : 0.0; break;
        case CfKind::cdf_participants:
        case CfKind::potential_cdf: s += eps + ((d->inside && d->g <= *stat.arg) ? 1.0 : 0.0); break;
        case CfKind::cdf_population:
          s += ((d->part && d->inside && d->g <= *stat.arg) ? 1.0 : 0.0) + (*stat.arg >= 0.0 ? eps + 1.0 - d->pi : 0.0);
          break;
        case CfKind::mean_propensity: s += d->pi; break;
        case CfKind::mean_u: s += d->inside ? d->u : 0.0; break;
        default: break;
      }
    }
    return s / nn;
  };

  std::vector<double> per_batch(kBatches);
  std::vector<const Draw*> all;
  all.reserve(per * kBatches);
  for (std::size_t b = 0; b < kBatches; ++b) {
    std::vector<const Draw*> ptrs;
    ptrs.reserve(per);
    for (const auto& d : draws[b]) {
      ptrs.push_back(&d);
      all.push_back(&d);
    }
    per_batch[b] = batch_value(ptrs);
  }
  OracleValue out;
  out.value = is_quantile ? batch_value(all) : mean_of(per_batch);
  out.se = sd_of_mean(per_batch);
  return out;
}

MomentCheck check_identification_moment_at(const DgpSpec& spec, int d, double pi, double pi_prime,
                                           std::span<const double> x, const std::vector<double>& tau_grid,
                                           std::size_t mc_n, std::uint64_t seed) {
  if (!(pi > 0.0 && pi <= 1.0 && pi_prime > 0.0 && pi_prime <= 1.0)) {
    throw Error(ErrorCode::domain, "propensities must lie in (0, 1]");
  }
  if (mc_n < kBatches * 100) throw Error(ErrorCode::spec, "too few Monte Carlo draws for the moment check");
  const CopulaSpec& cop = spec.groups[static_cast<std::size_t>(d)].copula;
  const std::size_t per = mc_n / kBatches;
  MomentCheck mc;
  mc.tau = tau_grid;
  const std::size_t nt = tau_grid.size();
  // Participant outcomes at the two instrument values, batch by batch.
  auto sample = [&](double p, std::uint64_t stream) {
    std::vector<std::vector<double>> out(kBatches);
    for (std::size_t b = 0; b < kBatches; ++b) {
      Rng rng = Rng::for_stream(seed, stream * kBatches + b);
      out[b].reserve(per);
      for (std::size_t r = 0; r < per; ++r) {
        const double v = p * rng.uniform();
        out[b].push_back(spec.sqf(d, x, inverse_conditional_given_v(cop, rng.uniform(), v)));
      }
      std::sort(out[b].begin(), out[b].end());
    }
    return out;
  };
  const auto at_z = sample(pi, 0);
  const auto at_zp = sample(pi_prime, 1);
  auto lhs_of = [&](const std::vector<double>& yz, const std::vector<double>& yzp, double tau) {
    // Left-inverse of the empirical CDF at z', then the empirical CDF at z.
    const auto q = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(yzp.size())));
    const double yq = yzp[std::max<std::size_t>(q, 1) - 1];
    const auto cnt = std::upper_bound(yz.begin(), yz.end(), yq) - yz.begin();
    return static_cast<double>(cnt) / static_cast<double>(yz.size());
  };
  for (std::size_t t = 0; t < nt; ++t) {
    const double tau = tau_grid[t];
    std::vector<double> vals(kBatches);
    for (std::size_t b = 0; b < kBatches; ++b) vals[b] = lhs_of(at_z[b], at_zp[b], tau);
    const double rhs = conditional_given_selection(cop, inverse_conditional_given_selection(cop, tau, pi_prime), pi);
    mc.lhs.push_back(mean_of(vals));
    mc.rhs.push_back(rhs);
    mc.se.push_back(sd_of_mean(vals));
    mc.max_abs_discrepancy = std::max(mc.max_abs_discrepancy, std::abs(mc.lhs.back() - rhs));
    mc.max_se = std::max(mc.max_se, mc.se.back());
  }
  return mc;
}

MomentCheck check_identification_moment(const DgpSpec& spec, int d, double z1, double z1_prime,
                                        std::span<const double> x, const std::vector<double>& tau_grid,
                                        std::size_t mc_n, std::uint64_t seed) {
  return check_identification_moment_at(spec, d, spec.propensity(d, z1, x), spec.propensity(d, z1_prime, x), x,
                                        tau_grid, mc_n, seed);
}

}  // namespace qrs
