#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qrs/dataset.hpp"
#include "qrs/decomposition.hpp"
#include "qrs/dgp.hpp"
#include "qrs/error.hpp"
#include "qrs/inference.hpp"
#include "qrs/pipeline.hpp"

namespace qrs::cli {

/// Every recognised key with its default; null schema entries must be set.
nlohmann::json default_config();

/// Applies "section.key=value". The value is read as JSON when it parses,
/// otherwise as a string. Config error for unknown keys.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Merges a user document into the defaults; unknown keys are config errors.
nlohmann::json merge_config(const nlohmann::json& user);

struct RunConfig {
  nlohmann::json doc;
  std::optional<Schema> schema;
  QrsConfig qrs;
  bool rearrange = false;
  BootstrapConfig boot;
  DgpSpec sim;
  std::vector<DecompRequest> requests;
  unsigned workers = 1;

  /// Validates every section; `need_schema` makes the schema keys mandatory.
  static RunConfig resolve(const nlohmann::json& doc, bool need_schema);
  /// Digest of the sections that determine a fit (schema and model).
  std::string fit_hash() const;
  /// Digest of the whole document minus run-time settings.
  std::string hash() const;
};

/// Expands the decompose section into requests.
std::vector<DecompRequest> decomposition_requests(const nlohmann::json& section);

/// Process exit status for an error class; 0 is reserved for success and
/// 2 for usage errors.
int exit_code(ErrorCode code);

/// Runs the tool on argv-style arguments (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qrs::cli
