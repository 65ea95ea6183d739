#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qrs/counterfactual.hpp"

namespace qrs {

enum class DecompKind {
  outcome,        // EC, CC, SC, PC of an outcome statistic
  participation,  // EC, CC of the mean propensity
  selection,      // EC, SC, PC of the mean latent rank U among participants
  potential,      // EC, CC of a potential-outcome statistic
};

std::string_view to_string(DecompKind kind);
DecompKind parse_decomp_kind(std::string_view name);

/// One decomposition to compute. The statistic is ignored for the
/// participation and selection kinds.
struct DecompRequest {
  DecompKind kind = DecompKind::outcome;
  CfStat stat;

  /// Config error when the statistic does not fit the kind.
  void validate() const;
  /// "participation", "selection", or "<kind>:<statistic>" with the
  /// statistic as in CfStat::label, e.g. "outcome:quantile_population@0.5".
  std::string label() const;
  static DecompRequest parse(std::string_view label);

  friend bool operator==(const DecompRequest&, const DecompRequest&) = default;
};

struct DecompResult {
  DecompKind kind = DecompKind::outcome;
  CfStat statistic;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> components;
  std::vector<std::pair<std::string, double>> anchors;
  /// Per entry, in entries() order.
  std::optional<std::vector<double>> se;
  std::optional<std::vector<std::string>> stars;
  /// Population quantile where some anchor sits on the mass at zero.
  bool spike = false;

  /// total followed by the components.
  std::vector<double> entries() const;
  std::vector<std::string> entry_names() const;
};

/// The anchors of the outcome decomposition, first to last:
/// 1111, 0111, 0011, 0001, 0000.
const std::vector<CfIndex>& decomposition_path();

/// Config error unless `path` is exactly decomposition_path().
void validate_path(std::span<const CfIndex> path);

DecompResult decompose(CfEngine& engine, const CfStat& stat);
DecompResult decompose_participation(CfEngine& engine);
DecompResult decompose_selection(CfEngine& engine);
DecompResult decompose_potential(CfEngine& engine, const CfStat& stat);
DecompResult evaluate(CfEngine& engine, const DecompRequest& request);

DecompResult decompose(const FitPair& fits, const Dataset& ds, const CfStat& stat, CfOptions o = {});
DecompResult decompose_participation(const FitPair& fits, const Dataset& ds, CfOptions o = {});
DecompResult decompose_selection(const FitPair& fits, const Dataset& ds, CfOptions o = {});
DecompResult decompose_potential(const FitPair& fits, const Dataset& ds, const CfStat& stat, CfOptions o = {});

}  // namespace qrs
