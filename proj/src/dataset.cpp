#include "qrs/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "qrs/error.hpp"

namespace qrs {

void Schema::validate() const {
  std::vector<std::string> names{outcome_col, selection_col, group_col, instrument_col};
  names.insert(names.end(), covariate_cols.begin(), covariate_cols.end());
  if (stratify_col) names.push_back(*stratify_col);
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw Error(ErrorCode::schema, "empty column name in schema");
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::schema, "column '" + n + "' is mapped more than once");
    }
  }
}

Dataset::Dataset(Schema schema, std::vector<double> y, std::vector<std::uint8_t> s,
                 std::vector<std::uint8_t> d, std::vector<double> z1, RowMatrix x,
                 std::vector<double> strata)
    : schema_(std::move(schema)),
      y_(std::move(y)),
      s_(std::move(s)),
      d_(std::move(d)),
      z1_(std::move(z1)),
      x_(std::move(x)),
      strata_(std::move(strata)) {
  const std::size_t n = y_.size();
  if (n == 0) throw Error(ErrorCode::empty_data, "dataset has no rows");
  if (s_.size() != n || d_.size() != n || z1_.size() != n ||
      static_cast<std::size_t>(x_.rows()) != n || (!strata_.empty() && strata_.size() != n)) {
    throw Error(ErrorCode::internal, "dataset columns have inconsistent lengths");
  }
  if (x_.cols() < 1) throw Error(ErrorCode::schema, "design matrix has no intercept column");
  for (std::size_t i = 0; i < n; ++i) {
    if (s_[i] > 1) throw ParseError(i + 1, "selection indicator must be 0 or 1");
    if (d_[i] > 1) throw ParseError(i + 1, "group label must be 0 or 1");
    if (x_(static_cast<Eigen::Index>(i), 0) != 1.0) {
      throw Error(ErrorCode::internal, "intercept column must equal 1");
    }
    if (s_[i] == 1 && !std::isfinite(y_[i])) {
      throw ParseError(i + 1, "outcome must be finite for participants");
    }
    if (s_[i] == 0) y_[i] = 0.0;
    (d_[i] == 0 ? n0_ : n1_)++;
  }
}

std::vector<std::string> Dataset::x_names() const {
  std::vector<std::string> names{"(intercept)"};
  names.insert(names.end(), schema_.covariate_cols.begin(), schema_.covariate_cols.end());
  while (names.size() < dim()) names.push_back("x" + std::to_string(names.size()));
  return names;
}

Observation Dataset::at(std::size_t i) const {
  Observation o;
  o.y = y_.at(i);
  o.s = s_[i];
  o.d = d_[i];
  o.z1 = z1_[i];
  const auto row = x_.row(static_cast<Eigen::Index>(i));
  o.x.assign(row.data(), row.data() + row.size());
  return o;
}

std::size_t Dataset::n_participants(int d) const noexcept {
  std::size_t count = 0;
  for (std::size_t i = 0; i < size(); ++i) count += (d_[i] == d && s_[i] == 1);
  return count;
}

std::vector<std::size_t> Dataset::group_rows(int d) const {
  std::vector<std::size_t> rows;
  rows.reserve(n_group(d));
  for (std::size_t i = 0; i < size(); ++i) {
    if (d_[i] == d) rows.push_back(i);
  }
  return rows;
}

std::vector<std::string> Dataset::two_group_issues() const {
  std::vector<std::string> issues;
  for (int g = 0; g < 2; ++g) {
    const std::size_t ng = n_group(g);
    const std::size_t np = n_participants(g);
    const std::string tag = "group " + std::to_string(g);
    if (ng == 0) {
      issues.push_back(tag + " has no rows");
    } else if (np == 0) {
      issues.push_back(tag + " has no participants (s=1)");
    }
  }
  return issues;
}

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  std::vector<double> y, z1, st;
  std::vector<std::uint8_t> s, d;
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), x_.cols());
  y.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    y.push_back(y_.at(i));
    s.push_back(s_[i]);
    d.push_back(d_[i]);
    z1.push_back(z1_[i]);
    if (!strata_.empty()) st.push_back(strata_[i]);
    x.row(static_cast<Eigen::Index>(r)) = x_.row(static_cast<Eigen::Index>(i));
  }
  return Dataset(schema_, std::move(y), std::move(s), std::move(d), std::move(z1), std::move(x),
                 std::move(st));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
  }
  return out;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  throw Error(ErrorCode::schema, "column '" + name + "' not found in header");
}

}  // namespace

Dataset parse_dataset(const std::string& text, const Schema& schema) {
  schema.validate();
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error(ErrorCode::empty_data, "input has no header row");

  const std::size_t iy = column_index(header, schema.outcome_col);
  const std::size_t is = column_index(header, schema.selection_col);
  const std::size_t id = column_index(header, schema.group_col);
  const std::size_t iz = column_index(header, schema.instrument_col);
  std::vector<std::size_t> ix;
  for (const auto& c : schema.covariate_cols) ix.push_back(column_index(header, c));
  std::optional<std::size_t> ist;
  if (schema.stratify_col) ist = column_index(header, *schema.stratify_col);

  std::vector<double> y, z1, st;
  std::vector<std::uint8_t> s, d;
  std::vector<double> xs;
  const std::size_t k = 1 + ix.size();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(f.size()));
    }
    auto number = [&](std::size_t j) {
      double v;
      if (!parse_double(f[j], v)) {
        throw ParseError(row, "non-numeric value '" + f[j] + "' in column '" + header[j] + "'");
      }
      return v;
    };
    auto indicator = [&](std::size_t j) -> std::uint8_t {
      const double v = number(j);
      if (v != 0.0 && v != 1.0) {
        throw ParseError(row, "column '" + header[j] + "' must be 0 or 1, found '" + f[j] + "'");
      }
      return static_cast<std::uint8_t>(v);
    };
    const std::uint8_t si = indicator(is);
    s.push_back(si);
    d.push_back(indicator(id));
    if (si == 1) {
      const double yv = number(iy);
      if (!std::isfinite(yv)) throw ParseError(row, "outcome must be finite for participants");
      y.push_back(yv);
    } else {
      // Non-participant outcomes carry no information; blank or any number is accepted.
      y.push_back(0.0);
    }
    z1.push_back(number(iz));
    xs.push_back(1.0);
    for (std::size_t j : ix) xs.push_back(number(j));
    if (ist) st.push_back(number(*ist));
  }
  if (row == 0) throw Error(ErrorCode::empty_data, "input has a header but no data rows");

  RowMatrix x = Eigen::Map<RowMatrix>(xs.data(), static_cast<Eigen::Index>(row),
                                      static_cast<Eigen::Index>(k));
  return Dataset(schema, std::move(y), std::move(s), std::move(d), std::move(z1), std::move(x),
                 std::move(st));
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::empty_data, "cannot open data file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), schema);
}

std::string format_dataset(const Dataset& ds) {
  const Schema& sc = ds.schema();
  std::string out = sc.outcome_col + "," + sc.selection_col + "," + sc.group_col + "," +
                    sc.instrument_col;
  for (const auto& c : sc.covariate_cols) out += "," + c;
  const bool has_strata = sc.stratify_col && !ds.strata().empty();
  if (has_strata) out += "," + *sc.stratify_col;
  out += "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    put(ds.y()[i]);
    out += ds.s()[i] ? ",1" : ",0";
    out += ds.d()[i] ? ",1," : ",0,";
    put(ds.z1()[i]);
    for (Eigen::Index j = 1; j < ds.x().cols(); ++j) {
      out += ",";
      put(ds.x()(static_cast<Eigen::Index>(i), j));
    }
    if (has_strata) {
      out += ",";
      put(ds.strata()[i]);
    }
    out += "\n";
  }
  return out;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::config, "cannot write '" + path.string() + "'");
  out << format_dataset(ds);
}

std::vector<Stratum> stratify(const Dataset& ds, const std::string& col) {
  if (!ds.schema().stratify_col || ds.strata().empty() || *ds.schema().stratify_col != col) {
    throw Error(ErrorCode::schema, "column '" + col + "' was not loaded as the stratify column");
  }
  std::map<double, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) rows[ds.strata()[i]].push_back(i);
  std::vector<Stratum> out;
  for (const auto& [value, idx] : rows) {
    Stratum st;
    st.value = value;
    st.data = ds.select(idx);
    st.issues = st.data.two_group_issues();
    st.usable = st.issues.empty();
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace qrs
