#include "qrs/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "qrs/serialize.hpp"

namespace qrs::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<double> kDefaultTaus{0.10, 0.25, 0.50, 0.75, 0.90};

// Typed lookup that names the offending key on failure.
template <class T>
T get(const json& doc, const std::string& sec, const std::string& key) {
  const json& v = doc.at(sec).at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::config, "config key " + sec + "." + key + " has the wrong type");
  }
}

std::string required_string(const json& doc, const std::string& sec, const std::string& key) {
  const json& v = doc.at(sec).at(key);
  if (v.is_null()) throw Error(ErrorCode::config, "missing config key " + sec + "." + key);
  return get<std::string>(doc, sec, key);
}

void merge_into(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw Error(ErrorCode::config, "config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw Error(ErrorCode::config, "unknown config key " + path);
    if (base[key].is_object()) {
      merge_into(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

struct StratumData {
  std::string tag;  // "all" or the stratum value
  std::optional<double> value;
  Dataset data;
  bool usable = true;
  std::vector<std::string> issues;
};

std::string stratum_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<StratumData> split(const Dataset& ds) {
  std::vector<StratumData> out;
  if (!ds.schema().stratify_col) {
    out.push_back({"all", std::nullopt, ds, ds.two_group_issues().empty(), ds.two_group_issues()});
    return out;
  }
  for (auto& st : stratify(ds, *ds.schema().stratify_col)) {
    out.push_back({stratum_tag(st.value), st.value, std::move(st.data), st.usable, st.issues});
  }
  return out;
}

struct Context {
  RunConfig cfg;
  fs::path out;
  std::optional<fs::path> data_path;
  std::string data_hash;
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;
  std::ostream* err = nullptr;

  std::string header() const {
    std::string h = "# config_hash=" + cfg.hash() + " seed=" + std::to_string(seed);
    if (!data_hash.empty()) h += " data_hash=" + data_hash;
    return h + "\n";
  }
};

fs::path fit_path(const fs::path& out, const std::string& tag, int d) {
  return out / ("fit_" + tag + "_g" + std::to_string(d) + ".json");
}

Dataset load(Context& ctx) {
  if (!ctx.data_path) throw Error(ErrorCode::config, "--data is required");
  const std::string text = read_text(*ctx.data_path);
  ctx.data_hash = fnv1a_hex(text);
  return parse_dataset(text, *ctx.cfg.schema);
}

std::string target_name(const DecompResult& r) {
  switch (r.kind) {
    case DecompKind::participation: return "propensity";
    case DecompKind::selection: return "participants";
    case DecompKind::potential: return "potential";
    case DecompKind::outcome: break;
  }
  return target_of(r.statistic.kind) == CfTarget::population ? "population" : "participants";
}

std::string arg_text(const DecompResult& r) { return r.statistic.arg ? fmt6(*r.statistic.arg) : "NA"; }

const std::vector<std::string> kAllEntries{"total", "EC", "CC", "SC", "PC"};

// Long-format table of every result; absent components are NA.
std::string long_table(const Context& ctx, const std::vector<std::pair<std::string, DecompResult>>& rows) {
  std::string s = ctx.header() + "stratum,decomposition,statistic,target,arg";
  bool with_se = false;
  for (const auto& [tag, r] : rows) with_se = with_se || r.se.has_value();
  for (const auto& e : kAllEntries) s += "," + e;
  if (with_se) {
    for (const auto& e : kAllEntries) s += ",se_" + e;
    for (const auto& e : kAllEntries) s += ",stars_" + e;
  }
  s += ",spike\n";
  for (const auto& [tag, r] : rows) {
    s += tag + "," + std::string(to_string(r.kind)) + "," + std::string(to_string(r.statistic.kind)) + "," +
         target_name(r) + "," + arg_text(r);
    const auto names = r.entry_names();
    const auto values = r.entries();
    auto lookup = [&](const std::string& e) -> std::optional<std::size_t> {
      for (std::size_t c = 0; c < names.size(); ++c) {
        if (names[c] == e) return c;
      }
      return std::nullopt;
    };
    for (const auto& e : kAllEntries) {
      const auto c = lookup(e);
      s += "," + (c ? fmt6(values[*c]) : std::string("NA"));
    }
    if (with_se) {
      for (const auto& e : kAllEntries) {
        const auto c = lookup(e);
        s += "," + (c && r.se ? fmt6((*r.se)[*c]) : std::string("NA"));
      }
      for (const auto& e : kAllEntries) {
        const auto c = lookup(e);
        s += "," + (c && r.stars ? (*r.stars)[*c] : std::string());
      }
    }
    s += r.spike ? ",1\n" : ",0\n";
  }
  return s;
}

// Presentation table: one row per stratum (and argument), entries scaled.
std::string presentation_table(const Context& ctx, const std::vector<std::pair<std::string, DecompResult>>& rows,
                               const std::function<bool(const DecompResult&)>& keep, double scale,
                               bool with_arg) {
  std::vector<std::string> names;
  for (const auto& [tag, r] : rows) {
    if (keep(r)) {
      names = r.entry_names();
      break;
    }
  }
  if (names.empty()) return {};
  std::string s = ctx.header();
  if (scale != 1.0) s += "# values multiplied by " + fmt6(scale) + "\n";
  s += with_arg ? "stratum,statistic,arg" : "stratum";
  bool with_se = false;
  for (const auto& [tag, r] : rows) with_se = with_se || (keep(r) && r.se.has_value());
  for (const auto& n : names) {
    const std::string head = n == "total" ? "Total" : n;
    s += "," + head;
    if (with_se) s += ",se_" + head + ",stars_" + head;
  }
  s += "\n";
  for (const auto& [tag, r] : rows) {
    if (!keep(r)) continue;
    s += tag;
    if (with_arg) s += "," + std::string(to_string(r.statistic.kind)) + "," + arg_text(r);
    const auto values = r.entries();
    for (std::size_t c = 0; c < values.size(); ++c) {
      s += "," + fmt6(values[c] * scale);
      if (with_se) {
        s += "," + (r.se ? fmt6((*r.se)[c] * scale) : std::string("NA"));
        s += "," + (r.stars ? (*r.stars)[c] : std::string());
      }
    }
    s += "\n";
  }
  return s;
}

void write_presentation(const Context& ctx, const std::vector<std::pair<std::string, DecompResult>>& rows) {
  auto kind_is = [](DecompKind k) { return [k](const DecompResult& r) { return r.kind == k; }; };
  auto stat_is = [](CfKind k) {
    return [k](const DecompResult& r) { return r.kind == DecompKind::outcome && r.statistic.kind == k; };
  };
  const struct {
    const char* file;
    std::function<bool(const DecompResult&)> keep;
    double scale;
    bool with_arg;
  } tables[] = {
      {"table2_participation.csv", kind_is(DecompKind::participation), 100.0, false},
      {"table6_mean_participants.csv", stat_is(CfKind::mean_participants), 1.0, false},
      {"table7_mean_population.csv", stat_is(CfKind::mean_population), 1.0, false},
      {"table_selection.csv", kind_is(DecompKind::selection), 100.0, false},
      {"table_quantiles_participants.csv", stat_is(CfKind::quantile_participants), 1.0, true},
      {"table_quantiles_population.csv", stat_is(CfKind::quantile_population), 1.0, true},
      {"table_cdf.csv",
       [](const DecompResult& r) {
         return r.kind == DecompKind::outcome &&
                (r.statistic.kind == CfKind::cdf_participants || r.statistic.kind == CfKind::cdf_population);
       },
       1.0, true},
      {"table_potential.csv", kind_is(DecompKind::potential), 1.0, true},
  };
  for (const auto& t : tables) {
    const std::string text = presentation_table(ctx, rows, t.keep, t.scale, t.with_arg);
    if (!text.empty()) write_text(ctx.out / t.file, text);
  }
}

std::string kendall_header() { return "stratum,group,family,theta,kendall_tau,criterion,warning\n"; }

std::string kendall_rows(const std::string& tag, const FitPair& fits) {
  std::string s;
  for (const auto& f : fits) {
    std::string warn;
    for (const auto& w : f.warnings) warn += (warn.empty() ? "" : "; ") + w;
    for (char& c : warn) {
      if (c == ',') c = ';';
    }
    s += tag + "," + std::to_string(f.group) + "," + std::string(to_string(f.copula.family())) + "," +
         fmt6(f.copula.theta()) + "," + fmt6(f.kendall()) + "," + fmt6(f.criterion) + "," + warn + "\n";
  }
  return s;
}

FitPair read_fits(const Context& ctx, const StratumData& st) {
  FitPair fits;
  for (int d = 0; d < 2; ++d) {
    const fs::path p = fit_path(ctx.out, st.tag, d);
    if (!fs::exists(p)) throw Error(ErrorCode::config, "fit file '" + p.string() + "' not found; run fit first");
    json j;
    try {
      j = json::parse(read_text(p));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::config, "cannot parse '" + p.string() + "': " + e.what());
    }
    if (j.value("config_hash", "") != ctx.cfg.fit_hash()) {
      throw Error(ErrorCode::staleness, "'" + p.string() + "' was fitted under a different configuration");
    }
    if (j.value("data_hash", "") != ctx.data_hash) {
      throw Error(ErrorCode::staleness, "'" + p.string() + "' was fitted on different data");
    }
    fits[static_cast<std::size_t>(d)] = fit_from_json(j.at("fit"), st.data);
  }
  return fits;
}

void warn_fits(const Context& ctx, const std::string& tag, const FitPair& fits) {
  for (const auto& f : fits) {
    for (const auto& w : f.warnings) *ctx.err << "warning: stratum " << tag << " group " << f.group << ": " << w << "\n";
  }
}

void warn_unusable(const Context& ctx, const StratumData& st) {
  std::string why;
  for (const auto& i : st.issues) why += (why.empty() ? "" : "; ") + i;
  *ctx.err << "warning: stratum " << st.tag << " is unusable and was skipped: " << why << "\n";
}

int cmd_simulate(Context& ctx) {
  const Simulation sim = simulate_with_latent(ctx.cfg.sim);
  fs::create_directories(ctx.out);
  write_dataset(sim.data, ctx.out / "data.csv");
  json doc = ctx.cfg.doc;
  const Schema sc = simulation_schema(ctx.cfg.sim.dim());
  doc["schema"]["outcome"] = sc.outcome_col;
  doc["schema"]["selection"] = sc.selection_col;
  doc["schema"]["group"] = sc.group_col;
  doc["schema"]["instrument"] = sc.instrument_col;
  doc["schema"]["covariates"] = sc.covariate_cols;
  doc["run"].erase("workers");
  write_text(ctx.out / "config.json", doc.dump(2) + "\n");
  std::string truth = ctx.header() + "group,family,theta,kendall_tau,n,participants\n";
  for (int d = 0; d < 2; ++d) {
    const auto& c = ctx.cfg.sim.groups[static_cast<std::size_t>(d)].copula;
    truth += std::to_string(d) + "," + std::string(to_string(c.family())) + "," + fmt6(c.theta()) + "," +
             fmt6(kendall_tau(c)) + "," + std::to_string(sim.data.n_group(d)) + "," +
             std::to_string(sim.data.n_participants(d)) + "\n";
  }
  write_text(ctx.out / "truth.csv", truth);
  *ctx.log << "wrote " << sim.data.size() << " rows to " << (ctx.out / "data.csv").string() << "\n";
  return 0;
}

int cmd_fit(Context& ctx) {
  const Dataset ds = load(ctx);
  fs::create_directories(ctx.out);
  std::string table3 = ctx.header() + kendall_header();
  std::string beta = ctx.header() + "stratum,group,tau,coefficient,value\n";
  for (const auto& st : split(ds)) {
    if (!st.usable) {
      warn_unusable(ctx, st);
      table3 += st.tag + ",NA,NA,NA,NA,NA,unusable stratum\n";
      continue;
    }
    const FitPair fits = fit_pair(st.data, ctx.cfg.qrs);
    warn_fits(ctx, st.tag, fits);
    for (const auto& f : fits) {
      const json rec{{"config_hash", ctx.cfg.fit_hash()},
                     {"data_hash", ctx.data_hash},
                     {"seed", ctx.seed},
                     {"stratum", st.tag},
                     {"fit", fit_to_json(f)}};
      write_text(fit_path(ctx.out, st.tag, f.group), rec.dump(2) + "\n");
      for (std::size_t j = 0; j < f.grid.size(); ++j) {
        for (std::size_t c = 0; c < f.x_names.size(); ++c) {
          beta += st.tag + "," + std::to_string(f.group) + "," + fmt6(f.grid.points[j]) + "," + f.x_names[c] + "," +
                  fmt6(f.beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c))) + "\n";
        }
      }
    }
    table3 += kendall_rows(st.tag, fits);
  }
  write_text(ctx.out / "table3_kendall.csv", table3);
  write_text(ctx.out / "beta.csv", beta);
  *ctx.log << "fits written to " << ctx.out.string() << "\n";
  return 0;
}

std::vector<std::pair<std::string, DecompResult>> decompose_all(Context& ctx, const Dataset& ds,
                                                                std::string* table3) {
  std::vector<std::pair<std::string, DecompResult>> rows;
  for (const auto& st : split(ds)) {
    if (!st.usable) {
      warn_unusable(ctx, st);
      continue;
    }
    const FitPair fits = read_fits(ctx, st);
    if (table3) *table3 += kendall_rows(st.tag, fits);
    for (auto& r : evaluate_requests(fits, st.data, ctx.cfg.requests, CfOptions{{}, ctx.cfg.rearrange})) {
      rows.emplace_back(st.tag, std::move(r));
    }
  }
  return rows;
}

int cmd_decompose(Context& ctx) {
  const Dataset ds = load(ctx);
  const auto rows = decompose_all(ctx, ds, nullptr);
  write_text(ctx.out / "decomposition.csv", long_table(ctx, rows));
  write_presentation(ctx, rows);
  *ctx.log << rows.size() << " decompositions written to " << ctx.out.string() << "\n";
  return 0;
}

int cmd_bootstrap(Context& ctx) {
  const Dataset ds = load(ctx);
  fs::create_directories(ctx.out);
  std::ofstream draws(ctx.out / "draws.csv", std::ios::binary);
  if (!draws) throw Error(ErrorCode::config, "cannot write draws.csv");
  draws << ctx.header() << "stratum,replication,decomposition,statistic,arg,entry,value\n";
  std::vector<std::pair<std::string, DecompResult>> rows;
  std::string failures;
  BootstrapConfig boot = ctx.cfg.boot;
  boot.seed = ctx.seed;
  for (const auto& st : split(ds)) {
    if (!st.usable) {
      warn_unusable(ctx, st);
      continue;
    }
    const FitPair fits = fit_pair(st.data, ctx.cfg.qrs);
    warn_fits(ctx, st.tag, fits);
    auto point = evaluate_requests(fits, st.data, ctx.cfg.requests, CfOptions{{}, ctx.cfg.rearrange});
    const DrawSink sink = [&](std::size_t j, const std::vector<DecompResult>& res) {
      for (const auto& r : res) {
        const auto names = r.entry_names();
        const auto values = r.entries();
        for (std::size_t c = 0; c < names.size(); ++c) {
          draws << st.tag << "," << j << "," << to_string(r.kind) << "," << to_string(r.statistic.kind) << ","
                << arg_text(r) << "," << names[c] << "," << fmt6(values[c]) << "\n";
        }
      }
    };
    const BootstrapResult br = bootstrap_run(st.data, ctx.cfg.qrs, boot, ctx.cfg.requests, sink, ctx.cfg.rearrange);
    for (const auto& f : br.failures) {
      *ctx.err << "warning: stratum " << st.tag << " replication " << f.replication << " failed: " << f.message << "\n";
    }
    failures += " " + st.tag + ":" + std::to_string(br.failures.size()) + "/" + std::to_string(br.requested);
    attach_inference(point, br);
    for (auto& r : point) rows.emplace_back(st.tag, std::move(r));
  }
  draws.close();
  std::string summary = long_table(ctx, rows);
  summary.insert(summary.find('\n') + 1, "# failed replications" + failures + "\n");
  write_text(ctx.out / "summary.csv", summary);
  write_presentation(ctx, rows);
  *ctx.log << "bootstrap summary written to " << ctx.out.string() << "\n";
  return 0;
}

int cmd_report(Context& ctx) {
  const Dataset ds = load(ctx);
  std::string table1 =
      ctx.header() + "stratum,group,n,participants,participation_pct,mean_outcome_participants\n";
  for (const auto& st : split(ds)) {
    for (int d = 0; d < 2; ++d) {
      double sum = 0.0;
      std::size_t n = 0, p = 0;
      for (std::size_t i = 0; i < st.data.size(); ++i) {
        if (st.data.d()[i] != d) continue;
        ++n;
        if (st.data.s()[i]) {
          ++p;
          sum += st.data.y()[i];
        }
      }
      table1 += st.tag + "," + std::to_string(d) + "," + std::to_string(n) + "," + std::to_string(p) + "," +
                (n ? fmt6(100.0 * static_cast<double>(p) / static_cast<double>(n)) : "NA") + "," +
                (p ? fmt6(sum / static_cast<double>(p)) : "NA") + "\n";
    }
  }
  fs::create_directories(ctx.out);
  write_text(ctx.out / "table1_descriptives.csv", table1);
  std::string table3 = ctx.header() + kendall_header();
  const auto rows = decompose_all(ctx, ds, &table3);
  write_text(ctx.out / "table3_kendall.csv", table3);
  write_presentation(ctx, rows);
  *ctx.log << "report tables written to " << ctx.out.string() << "\n";
  return 0;
}

}  // namespace

json default_config() {
  return json{
      {"schema",
       {{"outcome", nullptr},
        {"selection", nullptr},
        {"group", nullptr},
        {"instrument", nullptr},
        {"covariates", nullptr},
        {"stratify", nullptr}}},
      {"model",
       {{"family", "frank"},
        {"instrument_fn", "propensity"},
        {"link", "probit"},
        {"eps", 0.01},
        {"step", 0.01},
        {"theta_lo", nullptr},
        {"theta_hi", nullptr},
        {"coarse_points", 41},
        {"refine_tol", 1e-3},
        {"propensity_covariates", nullptr},
        {"interactions", json::array()},
        {"rearrange", false}}},
      {"decompose",
       {{"statistics", {"mean_participants", "mean_population", "quantile_participants", "quantile_population"}},
        {"taus", kDefaultTaus},
        {"cdf_points", json::array()},
        {"participation", true},
        {"selection", true},
        {"potential", true}}},
      {"bootstrap", {{"replications", 200}, {"law", "exponential_unit_mean"}}},
      {"simulate", {{"n0", 20000}, {"n1", 20000}, {"family", "frank"}, {"theta0", -5.0}, {"theta1", -2.0}}},
      {"run", {{"seed", 1}, {"workers", 1}}},
  };
}

json merge_config(const json& user) {
  json doc = default_config();
  merge_into(doc, user, "");
  return doc;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::config, "override '" + std::string(assignment) + "' must look like section.key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw Error(ErrorCode::config, "unknown config key " + path);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw Error(ErrorCode::config, "config key " + path + " is a section");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = value;
}

std::vector<DecompRequest> decomposition_requests(const json& sec) {
  std::vector<DecompRequest> out;
  const auto taus = sec.at("taus").get<std::vector<double>>();
  const auto ys = sec.at("cdf_points").get<std::vector<double>>();
  if (sec.at("participation").get<bool>()) out.push_back(DecompRequest::parse("participation"));
  if (sec.at("selection").get<bool>()) out.push_back(DecompRequest::parse("selection"));
  for (const auto& name : sec.at("statistics").get<std::vector<std::string>>()) {
    const CfKind kind = parse_cf_kind(name);
    const bool quantile = kind == CfKind::quantile_participants || kind == CfKind::quantile_population;
    const bool cdf = kind == CfKind::cdf_participants || kind == CfKind::cdf_population;
    if (quantile || cdf) {
      for (double a : quantile ? taus : ys) out.push_back({DecompKind::outcome, CfStat{kind, a}});
    } else {
      out.push_back({DecompKind::outcome, CfStat{kind, std::nullopt}});
    }
  }
  if (sec.at("potential").get<bool>()) {
    out.push_back({DecompKind::potential, CfStat{CfKind::potential_mean, std::nullopt}});
    for (double a : taus) out.push_back({DecompKind::potential, CfStat{CfKind::potential_quantile, a}});
  }
  for (const auto& r : out) r.validate();
  return out;
}

RunConfig RunConfig::resolve(const json& doc, bool need_schema) {
  RunConfig rc;
  rc.doc = doc;
  try {
    if (need_schema) {
      Schema sc;
      sc.outcome_col = required_string(doc, "schema", "outcome");
      sc.selection_col = required_string(doc, "schema", "selection");
      sc.group_col = required_string(doc, "schema", "group");
      sc.instrument_col = required_string(doc, "schema", "instrument");
      if (doc["schema"]["covariates"].is_null()) throw Error(ErrorCode::config, "missing config key schema.covariates");
      sc.covariate_cols = get<std::vector<std::string>>(doc, "schema", "covariates");
      if (!doc["schema"]["stratify"].is_null()) sc.stratify_col = get<std::string>(doc, "schema", "stratify");
      sc.validate();
      rc.schema = sc;
    }

    const json& m = doc.at("model");
    QrsConfig& q = rc.qrs;
    q.grid = TauGrid::make(get<double>(doc, "model", "eps"), get<double>(doc, "model", "step"));
    q.family = parse_copula_family(get<std::string>(doc, "model", "family"));
    q.instrument = parse_instrument_fn(get<std::string>(doc, "model", "instrument_fn"));
    q.propensity.link = parse_link(get<std::string>(doc, "model", "link"));
    if (!m.at("propensity_covariates").is_null()) {
      q.propensity.covariates = get<std::vector<std::string>>(doc, "model", "propensity_covariates");
    }
    for (const auto& pair : get<std::vector<std::vector<std::string>>>(doc, "model", "interactions")) {
      if (pair.size() != 2) throw Error(ErrorCode::config, "config key model.interactions needs pairs of names");
      q.propensity.interactions.emplace_back(pair[0], pair[1]);
    }
    ThetaSearch ts = ThetaSearch::defaults(q.family);
    if (!m.at("theta_lo").is_null()) ts.lo = get<double>(doc, "model", "theta_lo");
    if (!m.at("theta_hi").is_null()) ts.hi = get<double>(doc, "model", "theta_hi");
    ts.coarse_points = get<int>(doc, "model", "coarse_points");
    ts.refine_tol = get<double>(doc, "model", "refine_tol");
    q.search = ts;
    rc.rearrange = get<bool>(doc, "model", "rearrange");
    rc.workers = get<unsigned>(doc, "run", "workers");
    if (rc.workers == 0) throw Error(ErrorCode::config, "config key run.workers must be positive");
    q.workers = rc.workers;
    q.seed = get<std::uint64_t>(doc, "run", "seed");
    q.validate();

    rc.boot.replications = get<std::size_t>(doc, "bootstrap", "replications");
    rc.boot.law = parse_weight_law(get<std::string>(doc, "bootstrap", "law"));
    rc.boot.omega0 = rc.boot.law == WeightLaw::unit ? 0.0 : 1.0;
    rc.boot.seed = q.seed;
    rc.boot.workers = rc.workers;
    rc.boot.validate();

    rc.sim = DgpSpec::defaults();
    rc.sim.n = {get<std::size_t>(doc, "simulate", "n0"), get<std::size_t>(doc, "simulate", "n1")};
    const CopulaFamily sf = parse_copula_family(get<std::string>(doc, "simulate", "family"));
    rc.sim.groups[0].copula = CopulaSpec::make(sf, get<double>(doc, "simulate", "theta0"));
    rc.sim.groups[1].copula = CopulaSpec::make(sf, get<double>(doc, "simulate", "theta1"));
    rc.sim.seed = q.seed;
    rc.sim.validate();

    rc.requests = decomposition_requests(doc.at("decompose"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("malformed configuration: ") + e.what());
  }
  return rc;
}

std::string RunConfig::fit_hash() const {
  return fnv1a_hex(json{{"schema", doc.at("schema")}, {"model", doc.at("model")}}.dump());
}

std::string RunConfig::hash() const {
  json d = doc;
  if (d.contains("run")) d["run"].erase("workers");
  return fnv1a_hex(d.dump());
}

int exit_code(ErrorCode code) { return 3 + static_cast<int>(code); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantile regression with sample selection: estimation and gap decompositions"};
  app.require_subcommand(1);
  struct Flags {
    std::string config, data, out = "qrs_out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> stratify;
  } flags;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Draw a dataset from the simulation design"},
      {"fit", "Estimate both groups (per stratum) and write fit records"},
      {"decompose", "Decompose gaps from existing fit records"},
      {"bootstrap", "Refit under bootstrap weights and attach standard errors"},
      {"report", "Write descriptive, copula and decomposition tables"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", flags.config, "JSON configuration file");
    sub->add_option("--data", flags.data, "Input CSV file");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--seed", flags.seed, "Random seed (run.seed)");
    sub->add_option("--workers", flags.workers, "Worker threads (run.workers)");
    sub->add_option("--stratify", flags.stratify, "Stratification column (schema.stratify)");
  }
  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int rc = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return rc == 0 ? 0 : 2;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  try {
    json doc = default_config();
    if (!flags.config.empty()) {
      json user;
      try {
        user = json::parse(read_text(flags.config));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::config, "cannot parse '" + flags.config + "': " + e.what());
      }
      doc = merge_config(user);
    }
    for (const auto& extra : sub->remaining()) {
      if (extra.rfind("--", 0) != 0) throw Error(ErrorCode::config, "unexpected argument '" + extra + "'");
      apply_override(doc, std::string_view(extra).substr(2));
    }
    if (flags.seed) doc["run"]["seed"] = *flags.seed;
    if (flags.workers) doc["run"]["workers"] = *flags.workers;
    if (flags.stratify) doc["schema"]["stratify"] = *flags.stratify;

    Context ctx;
    ctx.cfg = RunConfig::resolve(doc, cmd != "simulate");
    ctx.out = flags.out;
    if (!flags.data.empty()) ctx.data_path = fs::path(flags.data);
    ctx.seed = ctx.cfg.qrs.seed;
    ctx.log = &out;
    ctx.err = &err;
    if (cmd == "simulate") return cmd_simulate(ctx);
    if (cmd == "fit") return cmd_fit(ctx);
    if (cmd == "decompose") return cmd_decompose(ctx);
    if (cmd == "bootstrap") return cmd_bootstrap(ctx);
    return cmd_report(ctx);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_code(ErrorCode::config);
  }
}

}  // namespace qrs::cli
