#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qrs {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Column mapping from an input file onto the model variables.
struct Schema {
  std::string outcome_col;
  std::string selection_col;
  std::string group_col;
  std::string instrument_col;
  std::vector<std::string> covariate_cols;
  std::optional<std::string> stratify_col;

  /// Throws a schema error when a name is empty or repeated.
  void validate() const;
};

struct Observation {
  double y = 0.0;
  int s = 0;
  int d = 0;
  double z1 = 0.0;
  std::vector<double> x;  // x[0] == 1
};

/// Immutable column store of observations (y, s, d, z1, x). The design
/// matrix x always carries the intercept in column 0.
class Dataset {
 public:
  Dataset() = default;

  /// Builds and validates a dataset. `x` must already include the intercept
  /// column. Rows with s = 0 have y reset to 0.
  Dataset(Schema schema, std::vector<double> y, std::vector<std::uint8_t> s,
          std::vector<std::uint8_t> d, std::vector<double> z1, RowMatrix x,
          std::vector<double> strata = {});

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  const Schema& schema() const noexcept { return schema_; }
  /// Names of the x columns, starting with "(intercept)".
  std::vector<std::string> x_names() const;

  const std::vector<double>& y() const noexcept { return y_; }
  const std::vector<std::uint8_t>& s() const noexcept { return s_; }
  const std::vector<std::uint8_t>& d() const noexcept { return d_; }
  const std::vector<double>& z1() const noexcept { return z1_; }
  const RowMatrix& x() const noexcept { return x_; }
  const std::vector<double>& strata() const noexcept { return strata_; }

  Observation at(std::size_t i) const;

  std::size_t n_group(int d) const noexcept { return d == 0 ? n0_ : n1_; }
  std::size_t n_participants(int d) const noexcept;
  std::vector<std::size_t> group_rows(int d) const;

  /// Problems that make a two-group analysis impossible (an empty group or a
  /// group without participants), empty when usable. A group in which every
  /// row participates is allowed; the pipeline treats its propensity as 1.
  std::vector<std::string> two_group_issues() const;

  /// Subset in the given row order.
  Dataset select(const std::vector<std::size_t>& rows) const;

 private:
  Schema schema_;
  std::vector<double> y_;
  std::vector<std::uint8_t> s_;
  std::vector<std::uint8_t> d_;
  std::vector<double> z1_;
  RowMatrix x_;
  std::vector<double> strata_;
  std::size_t n0_ = 0;
  std::size_t n1_ = 0;
};

/// Reads a comma-separated file with a header row. The intercept is prepended
/// automatically; input files never contain it.
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);

/// Parses CSV text (same rules as load_dataset).
Dataset parse_dataset(const std::string& text, const Schema& schema);

/// Writes the dataset with the schema's column names at full precision.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
std::string format_dataset(const Dataset& ds);

struct Stratum {
  double value = 0.0;
  Dataset data;
  bool usable = true;
  std::vector<std::string> issues;
};

/// Partitions by `col`, which must be the schema's stratify column.
/// Strata are ordered by value; unusable strata are kept and flagged.
std::vector<Stratum> stratify(const Dataset& ds, const std::string& col);

}  // namespace qrs
