#include "qrs/decomposition.hpp"

#include <cmath>

#include "qrs/error.hpp"

namespace qrs {

namespace {

constexpr std::pair<DecompKind, std::string_view> kDecompNames[] = {
    {DecompKind::outcome, "outcome"},
    {DecompKind::participation, "participation"},
    {DecompKind::selection, "selection"},
    {DecompKind::potential, "potential"},
};

bool is_potential(CfKind k) {
  return k == CfKind::potential_mean || k == CfKind::potential_cdf || k == CfKind::potential_quantile;
}

bool is_outcome(CfKind k) {
  switch (k) {
    case CfKind::mean_participants:
    case CfKind::mean_population:
    case CfKind::cdf_participants:
    case CfKind::cdf_population:
    case CfKind::quantile_participants:
    case CfKind::quantile_population: return true;
    default: return false;
  }
}

// Components are consecutive anchor differences; the total is their
// left-to-right sum so that it telescopes exactly.
void telescope(DecompResult& r, const std::vector<std::string>& names) {
  r.components.clear();
  r.total = 0.0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const double v = r.anchors[c].second - r.anchors[c + 1].second;
    r.components.emplace_back(names[c], v);
    r.total += v;
  }
}

}  // namespace

std::string_view to_string(DecompKind kind) {
  for (const auto& [k, name] : kDecompNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

DecompKind parse_decomp_kind(std::string_view name) {
  for (const auto& [k, n] : kDecompNames) {
    if (n == name) return k;
  }
  throw Error(ErrorCode::config, "unknown decomposition kind '" + std::string(name) + "'");
}

void DecompRequest::validate() const {
  switch (kind) {
    case DecompKind::outcome:
      stat.validate();
      if (!is_outcome(stat.kind)) {
        throw Error(ErrorCode::config, "statistic " + stat.label() + " has no outcome decomposition");
      }
      break;
    case DecompKind::potential:
      stat.validate();
      if (!is_potential(stat.kind)) {
        throw Error(ErrorCode::config, "statistic " + stat.label() + " is not a potential-outcome statistic");
      }
      break;
    case DecompKind::participation:
    case DecompKind::selection: break;
  }
}

std::string DecompRequest::label() const {
  if (kind == DecompKind::participation || kind == DecompKind::selection) return std::string(to_string(kind));
  return std::string(to_string(kind)) + ":" + stat.label();
}

DecompRequest DecompRequest::parse(std::string_view label) {
  DecompRequest r;
  const auto colon = label.find(':');
  r.kind = parse_decomp_kind(label.substr(0, colon));
  if (r.kind == DecompKind::participation || r.kind == DecompKind::selection) {
    if (colon != std::string_view::npos) {
      throw Error(ErrorCode::config, "decomposition '" + std::string(label) + "' takes no statistic");
    }
    r.stat = CfStat{r.kind == DecompKind::participation ? CfKind::mean_propensity : CfKind::mean_u, std::nullopt};
  } else {
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::config, "decomposition '" + std::string(label) + "' needs a statistic");
    }
    r.stat = CfStat::parse(label.substr(colon + 1));
  }
  r.validate();
  return r;
}

std::vector<double> DecompResult::entries() const {
  std::vector<double> out{total};
  for (const auto& c : components) out.push_back(c.second);
  return out;
}

std::vector<std::string> DecompResult::entry_names() const {
  std::vector<std::string> out{"total"};
  for (const auto& c : components) out.push_back(c.first);
  return out;
}

const std::vector<CfIndex>& decomposition_path() {
  static const std::vector<CfIndex> path{{1, 1, 1, 1}, {0, 1, 1, 1}, {0, 0, 1, 1}, {0, 0, 0, 1}, {0, 0, 0, 0}};
  return path;
}

void validate_path(std::span<const CfIndex> path) {
  const auto& ref = decomposition_path();
  bool ok = path.size() == ref.size();
  for (std::size_t i = 0; ok && i < path.size(); ++i) ok = path[i] == ref[i];
  if (!ok) {
    throw Error(ErrorCode::config,
                "only the path 1111 -> 0111 -> 0011 -> 0001 -> 0000 is supported");
  }
}

DecompResult decompose(CfEngine& engine, const CfStat& stat) {
  DecompRequest{DecompKind::outcome, stat}.validate();
  DecompResult r;
  r.kind = DecompKind::outcome;
  r.statistic = stat;
  const CfTarget target = target_of(stat.kind);
  for (const CfIndex& idx : decomposition_path()) {
    const double v = engine.value(idx, stat);
    r.anchors.emplace_back(idx.label(), v);
    if (stat.kind == CfKind::quantile_population && v == 0.0 && engine.distribution(idx, target).zero_mass() > 0.0) {
      r.spike = true;
    }
  }
  telescope(r, {"EC", "CC", "SC", "PC"});
  return r;
}

DecompResult decompose_participation(CfEngine& engine) {
  DecompResult r;
  r.kind = DecompKind::participation;
  r.statistic = CfStat{CfKind::mean_propensity, std::nullopt};
  for (const auto& [h, m] : {std::pair{1, 1}, std::pair{0, 1}, std::pair{0, 0}}) {
    r.anchors.emplace_back(std::to_string(h) + std::to_string(m), engine.mean_propensity(h, m));
  }
  telescope(r, {"EC", "CC"});
  return r;
}

DecompResult decompose_selection(CfEngine& engine) {
  DecompResult r;
  r.kind = DecompKind::selection;
  r.statistic = CfStat{CfKind::mean_u, std::nullopt};
  const int path[4][3] = {{1, 1, 1}, {0, 1, 1}, {0, 0, 1}, {0, 0, 0}};
  for (const auto& p : path) {
    r.anchors.emplace_back(std::to_string(p[0]) + std::to_string(p[1]) + std::to_string(p[2]),
                           engine.mean_u(p[0], p[1], p[2]));
  }
  telescope(r, {"EC", "SC", "PC"});
  return r;
}

DecompResult decompose_potential(CfEngine& engine, const CfStat& stat) {
  DecompRequest{DecompKind::potential, stat}.validate();
  DecompResult r;
  r.kind = DecompKind::potential;
  r.statistic = stat;
  for (const auto& [h, k] : {std::pair{1, 1}, std::pair{0, 1}, std::pair{0, 0}}) {
    r.anchors.emplace_back(std::to_string(h) + std::to_string(k), engine.value(CfIndex{h, k, k, k}, stat));
  }
  telescope(r, {"EC", "CC"});
  return r;
}

DecompResult evaluate(CfEngine& engine, const DecompRequest& request) {
  switch (request.kind) {
    case DecompKind::outcome: return decompose(engine, request.stat);
    case DecompKind::participation: return decompose_participation(engine);
    case DecompKind::selection: return decompose_selection(engine);
    case DecompKind::potential: return decompose_potential(engine, request.stat);
  }
  throw Error(ErrorCode::internal, "unhandled decomposition kind");
}

DecompResult decompose(const FitPair& fits, const Dataset& ds, const CfStat& stat, CfOptions o) {
  CfEngine engine(fits, ds, o);
  return decompose(engine, stat);
}

DecompResult decompose_participation(const FitPair& fits, const Dataset& ds, CfOptions o) {
  CfEngine engine(fits, ds, o);
  return decompose_participation(engine);
}

DecompResult decompose_selection(const FitPair& fits, const Dataset& ds, CfOptions o) {
  CfEngine engine(fits, ds, o);
  return decompose_selection(engine);
}

DecompResult decompose_potential(const FitPair& fits, const Dataset& ds, const CfStat& stat, CfOptions o) {
  CfEngine engine(fits, ds, o);
  return decompose_potential(engine, stat);
}

}  // namespace qrs
