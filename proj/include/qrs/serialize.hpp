#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "qrs/dataset.hpp"
#include "qrs/pipeline.hpp"

namespace qrs {

/// FNV-1a 64-bit digest as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// %.6g, with "NA" for NaN.
std::string fmt6(double v);

/// Full-precision fit record. pi_hat is not stored; it is recomputed from
/// the propensity model when the fit is read back against its dataset.
nlohmann::json fit_to_json(const QrsFit& fit);
QrsFit fit_from_json(const nlohmann::json& j, const Dataset& ds);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace qrs
