#include "qrs/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qrs/error.hpp"

namespace qrs {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt6(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

nlohmann::json fit_to_json(const QrsFit& fit) {
  using nlohmann::json;
  const auto& pm = fit.propensity;
  json prop{{"link", to_string(pm.link)},
            {"names", pm.names},
            {"gamma", std::vector<double>(pm.gamma.data(), pm.gamma.data() + pm.gamma.size())},
            {"converged", pm.converged},
            {"loglik", pm.loglik},
            {"iterations", pm.iterations},
            {"all_participants", pm.all_participants},
            {"covariates", pm.spec.covariates ? json(*pm.spec.covariates) : json(nullptr)},
            {"interactions", json::array()}};
  for (const auto& [a, b] : pm.spec.interactions) prop["interactions"].push_back({a, b});
  json beta = json::array();
  for (Eigen::Index r = 0; r < fit.beta.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(fit.beta.cols()));
    for (Eigen::Index c = 0; c < fit.beta.cols(); ++c) row[static_cast<std::size_t>(c)] = fit.beta(r, c);
    beta.push_back(row);
  }
  json trace = json::array();
  for (const auto& p : fit.trace) trace.push_back({p.theta, p.value});
  return json{{"group", fit.group},
              {"grid", {{"eps", fit.grid.eps}, {"step", fit.grid.step}}},
              {"x_names", fit.x_names},
              {"propensity", prop},
              {"copula", {{"family", to_string(fit.copula.family())}, {"theta", fit.copula.theta()}}},
              {"kendall_tau", fit.kendall()},
              {"criterion", fit.criterion},
              {"tau", fit.grid.points},
              {"beta", beta},
              {"trace", trace},
              {"warnings", fit.warnings}};
}

QrsFit fit_from_json(const nlohmann::json& j, const Dataset& ds) {
  try {
    QrsFit fit;
    fit.group = j.at("group").get<int>();
    fit.grid = TauGrid::make(j.at("grid").at("eps").get<double>(), j.at("grid").at("step").get<double>());
    fit.x_names = j.at("x_names").get<std::vector<std::string>>();
    const auto& p = j.at("propensity");
    PropensityModel& pm = fit.propensity;
    pm.link = parse_link(p.at("link").get<std::string>());
    pm.spec.link = pm.link;
    if (!p.at("covariates").is_null()) pm.spec.covariates = p.at("covariates").get<std::vector<std::string>>();
    for (const auto& pair : p.at("interactions")) {
      pm.spec.interactions.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
    }
    pm.names = p.at("names").get<std::vector<std::string>>();
    const auto gamma = p.at("gamma").get<std::vector<double>>();
    pm.gamma = Eigen::Map<const Eigen::VectorXd>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
    pm.converged = p.at("converged").get<bool>();
    pm.loglik = p.at("loglik").get<double>();
    pm.iterations = p.at("iterations").get<int>();
    pm.all_participants = p.at("all_participants").get<bool>();
    fit.copula = CopulaSpec::make(parse_copula_family(j.at("copula").at("family").get<std::string>()),
                                  j.at("copula").at("theta").get<double>());
    fit.criterion = j.at("criterion").get<double>();
    const auto& beta = j.at("beta");
    if (beta.size() != fit.grid.size()) throw Error(ErrorCode::config, "fit record has the wrong number of beta rows");
    fit.beta.resize(static_cast<Eigen::Index>(beta.size()), static_cast<Eigen::Index>(fit.x_names.size()));
    for (std::size_t r = 0; r < beta.size(); ++r) {
      const auto row = beta[r].get<std::vector<double>>();
      if (row.size() != fit.x_names.size()) throw Error(ErrorCode::config, "fit record has a malformed beta row");
      for (std::size_t c = 0; c < row.size(); ++c) {
        fit.beta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
    for (const auto& t : j.at("trace")) fit.trace.push_back({t.at(0).get<double>(), t.at(1).get<double>()});
    fit.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (propensity_names(ds, pm.spec) != pm.names || ds.x_names() != fit.x_names) {
      throw Error(ErrorCode::staleness, "fit record does not match the dataset columns");
    }
    if (pm.all_participants) {
      fit.pi_hat.assign(ds.size(), 1.0);
    } else {
      fit.pi_hat = predict_rows(pm, ds);
    }
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed fit record: ") + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::config, "cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace qrs
