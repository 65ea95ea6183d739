#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qrs/cli.hpp"

using namespace qrs;
namespace fs = std::filesystem;

namespace {

// Small grid and a short theta search keep each fit well under a second.
const std::vector<std::string> kFast{"--model.eps=0.05", "--model.step=0.05", "--model.coarse_points=9",
                                     "--model.refine_tol=0.05"};

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args, bool fast = true) {
  if (fast) args.insert(args.end(), kFast.begin(), kFast.end());
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qrs_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

// CSV with leading comment lines; rows keyed by header name.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
};

Table read_table(const fs::path& p) {
  Table t;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) {
      t.comments.push_back(line);
    } else if (t.header.empty()) {
      t.header = split(line);
    } else {
      const auto f = split(line);
      REQUIRE(f.size() == t.header.size());
      std::map<std::string, std::string> row;
      for (std::size_t c = 0; c < f.size(); ++c) row[t.header[c]] = f[c];
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

// Simulated data plus the config the simulate command writes next to it.
fs::path simulated(const std::string& name, std::size_t n = 400) {
  const fs::path dir = scratch(name);
  const auto r = run({"simulate", "--out", dir.string(), "--simulate.n0=" + std::to_string(n),
                      "--simulate.n1=" + std::to_string(n), "--seed", "5"},
                     false);
  REQUIRE(r.code == 0);
  return dir;
}

std::vector<std::string> fit_args(const fs::path& data_dir, const fs::path& out, const std::string& cmd) {
  return {cmd, "--config", (data_dir / "config.json").string(), "--data", (data_dir / "data.csv").string(), "--out",
          out.string()};
}

bool has_file(const fs::path& p) { return fs::exists(p) && fs::file_size(p) > 0; }

}  // namespace

TEST_CASE("overrides and merging reject unknown keys") {
  auto doc = cli::default_config();
  cli::apply_override(doc, "model.family=gaussian");
  CHECK(doc["model"]["family"] == "gaussian");
  cli::apply_override(doc, "decompose.taus=[0.5]");
  CHECK(doc["decompose"]["taus"].size() == 1);
  cli::apply_override(doc, "run.workers=4");
  CHECK(doc["run"]["workers"] == 4);
  CHECK_THROWS_AS(cli::apply_override(doc, "model.nope=1"), Error);
  CHECK_THROWS_AS(cli::apply_override(doc, "model=1"), Error);
  CHECK_THROWS_AS(cli::apply_override(doc, "model.family"), Error);
  CHECK_THROWS_AS(cli::merge_config(nlohmann::json{{"modle", {{"family", "frank"}}}}), Error);
  CHECK_NOTHROW(cli::merge_config(nlohmann::json{{"model", {{"family", "frank"}}}}));

  // Defaults cover the reported percentiles and a full request set.
  const auto rc = cli::RunConfig::resolve(cli::default_config(), false);
  CHECK(rc.qrs.grid.size() == 99);
  CHECK(cli::default_config()["decompose"]["taus"] == nlohmann::json({0.10, 0.25, 0.50, 0.75, 0.90}));
  CHECK(rc.requests.size() == 2 + 2 + 2 * 5 + 1 + 5);
}

TEST_CASE("exit codes") {
  CHECK(run({}, false).code == 2);
  CHECK(run({"frobnicate"}, false).code == 2);
  CHECK(run({"fit", "--workers", "many"}, false).code == 2);
  CHECK(run({"fit", "--help"}, false).code == 0);
  const auto r = run({"fit", "--model.nonsense=3"}, false);
  CHECK(r.code == cli::exit_code(ErrorCode::config));
  CHECK(r.err.find("model.nonsense") != std::string::npos);
  CHECK(cli::exit_code(ErrorCode::schema) > 2);
  CHECK(cli::exit_code(ErrorCode::staleness) != cli::exit_code(ErrorCode::config));
}

TEST_CASE("missing config key names the key") {
  const fs::path dir = simulated("missing");
  auto cfg = nlohmann::json::parse(slurp(dir / "config.json"));
  cfg["schema"].erase("group");
  std::ofstream(dir / "partial.json") << cfg.dump();
  const auto r = run({"fit", "--config", (dir / "partial.json").string(), "--data", (dir / "data.csv").string(),
                      "--out", (dir / "out").string()});
  CHECK(r.code == cli::exit_code(ErrorCode::config));
  CHECK(r.err.find("schema.group") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));
  // --data omitted.
  const auto r2 = run({"fit", "--config", (dir / "config.json").string(), "--out", (dir / "out").string()});
  CHECK(r2.code == cli::exit_code(ErrorCode::config));
}

TEST_CASE("simulate, fit, decompose and report end to end") {
  const fs::path dir = simulated("e2e");
  CHECK(has_file(dir / "truth.csv"));
  const fs::path out = dir / "out";
  const auto f = run(fit_args(dir, out, "fit"));
  REQUIRE(f.code == 0);
  CHECK(has_file(out / "fit_all_g0.json"));
  CHECK(has_file(out / "fit_all_g1.json"));
  CHECK(has_file(out / "beta.csv"));

  const Table t3 = read_table(out / "table3_kendall.csv");
  REQUIRE(t3.comments.size() == 1);
  CHECK(t3.comments[0].find("config_hash=") != std::string::npos);
  CHECK(t3.comments[0].find("seed=5") != std::string::npos);
  CHECK(t3.comments[0].find("data_hash=") != std::string::npos);
  REQUIRE(t3.rows.size() == 2);
  for (const auto& row : t3.rows) {
    CHECK(row.at("family") == "frank");
    const double k = std::stod(row.at("kendall_tau"));
    CHECK(k > -1.0);
    CHECK(k < 1.0);
  }

  REQUIRE(run(fit_args(dir, out, "decompose")).code == 0);
  const Table dec = read_table(out / "decomposition.csv");
  REQUIRE(dec.comments.size() == 1);
  std::size_t quantile_rows = 0;
  for (const auto& row : dec.rows) {
    const std::string kind = row.at("decomposition");
    if (kind == "participation") {
      CHECK(row.at("SC") == "NA");
      CHECK(row.at("PC") == "NA");
      CHECK(row.at("EC") != "NA");
      CHECK(row.at("CC") != "NA");
    } else if (kind == "selection") {
      CHECK(row.at("CC") == "NA");
    } else if (kind == "outcome") {
      for (const char* e : {"total", "EC", "CC", "SC", "PC"}) CHECK(row.at(e) != "NA");
      if (row.at("statistic").rfind("quantile", 0) == 0) ++quantile_rows;
    }
  }
  // One row per (tau, target) in the default sweep.
  CHECK(quantile_rows == 10);

  const Table t6 = read_table(out / "table6_mean_participants.csv");
  CHECK(t6.header == std::vector<std::string>{"stratum", "Total", "EC", "CC", "SC", "PC"});
  const Table t2 = read_table(out / "table2_participation.csv");
  CHECK(t2.header == std::vector<std::string>{"stratum", "Total", "EC", "CC"});
  // Presentation tables are scaled; the raw table is not.
  REQUIRE(t2.comments.size() == 2);
  double raw_total = 0.0;
  for (const auto& row : dec.rows) {
    if (row.at("decomposition") == "participation") raw_total = std::stod(row.at("total"));
  }
  CHECK(std::stod(t2.rows.at(0).at("Total")) == doctest::Approx(100.0 * raw_total).epsilon(1e-5));
  CHECK(has_file(out / "table7_mean_population.csv"));
  CHECK(has_file(out / "table_quantiles_participants.csv"));

  REQUIRE(run(fit_args(dir, out, "report")).code == 0);
  const Table t1 = read_table(out / "table1_descriptives.csv");
  REQUIRE(t1.rows.size() == 2);
  CHECK(t1.rows[0].at("n") == "400");
}

TEST_CASE("fit records are checked against the current configuration and data") {
  const fs::path dir = simulated("stale");
  const fs::path out = dir / "out";
  REQUIRE(run(fit_args(dir, out, "fit")).code == 0);

  auto args = fit_args(dir, out, "decompose");
  args.push_back("--model.link=logit");
  const auto r = run(args);
  CHECK(r.code == cli::exit_code(ErrorCode::staleness));
  CHECK(r.err.find("different configuration") != std::string::npos);

  // Same model settings, different draw.
  REQUIRE(run({"simulate", "--out", dir.string(), "--simulate.n0=400", "--simulate.n1=400", "--seed", "6"}, false)
              .code == 0);
  const auto r2 = run(fit_args(dir, out, "decompose"));
  CHECK(r2.code == cli::exit_code(ErrorCode::staleness));
  CHECK(r2.err.find("different data") != std::string::npos);

  // Changing only decomposition settings keeps the fits valid.
  REQUIRE(run({"simulate", "--out", dir.string(), "--simulate.n0=400", "--simulate.n1=400", "--seed", "5"}, false)
              .code == 0);
  args = fit_args(dir, out, "decompose");
  args.push_back("--decompose.taus=[0.5]");
  CHECK(run(args).code == 0);
  // Worker count is a run-time setting only.
  args.push_back("--workers=2");
  CHECK(run(args).code == 0);

  fs::remove_all(out);
  const auto r3 = run(fit_args(dir, out, "decompose"));
  CHECK(r3.code == cli::exit_code(ErrorCode::config));
  CHECK(r3.err.find("run fit first") != std::string::npos);
}

TEST_CASE("stratifying by a binary column gives two fit sets") {
  const fs::path dir = simulated("strata", 600);
  std::istringstream in(slurp(dir / "data.csv"));
  std::ostringstream outcsv;
  std::string line;
  std::getline(in, line);
  outcsv << line << ",region\n";
  for (int i = 0; std::getline(in, line); ++i) outcsv << line << "," << (i % 2) << "\n";
  std::ofstream(dir / "data.csv", std::ios::binary) << outcsv.str();

  const fs::path out = dir / "out";
  auto args = fit_args(dir, out, "fit");
  args.insert(args.end(), {"--stratify", "region"});
  REQUIRE(run(args).code == 0);
  for (const char* tag : {"0", "1"}) {
    for (int d = 0; d < 2; ++d) {
      CHECK(has_file(out / ("fit_" + std::string(tag) + "_g" + std::to_string(d) + ".json")));
    }
  }
  CHECK_FALSE(fs::exists(out / "fit_all_g0.json"));
  const Table t3 = read_table(out / "table3_kendall.csv");
  REQUIRE(t3.rows.size() == 4);
  CHECK(t3.rows[0].at("stratum") == "0");
  CHECK(t3.rows[3].at("stratum") == "1");

  args[0] = "decompose";
  REQUIRE(run(args).code == 0);
  const Table t6 = read_table(out / "table6_mean_participants.csv");
  REQUIRE(t6.rows.size() == 2);
  CHECK(t6.rows[0].at("stratum") == "0");
  CHECK(t6.rows[1].at("stratum") == "1");
}

TEST_CASE("fixed seed gives byte-identical outputs") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const fs::path& dir : {a, b}) {
    REQUIRE(run({"simulate", "--out", dir.string(), "--simulate.n0=300", "--simulate.n1=300", "--seed", "9"}, false)
                .code == 0);
  }
  CHECK(slurp(a / "data.csv") == slurp(b / "data.csv"));
  auto boot = [](const fs::path& dir, const std::string& workers) {
    auto args = fit_args(dir, dir / "out", "bootstrap");
    args.insert(args.end(), {"--bootstrap.replications=6", "--workers", workers, "--decompose.taus=[0.5]"});
    return run(args).code;
  };
  REQUIRE(boot(a, "1") == 0);
  REQUIRE(boot(b, "3") == 0);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a / "out")) {
    const fs::path other = b / "out" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
    ++compared;
  }
  CHECK(compared >= 5);
}

TEST_CASE("small bootstrap attaches positive standard errors") {
  const fs::path dir = simulated("boot");
  auto args = fit_args(dir, dir / "out", "bootstrap");
  args.push_back("--bootstrap.replications=8");
  const auto r = run(args);
  REQUIRE(r.code == 0);
  const Table s = read_table(dir / "out" / "summary.csv");
  REQUIRE(s.comments.size() == 2);
  CHECK(s.comments[1] == "# failed replications all:0/8");
  std::size_t checked = 0;
  for (const auto& row : s.rows) {
    if (row.at("spike") == "1") continue;
    for (const char* e : {"total", "EC", "CC", "SC", "PC"}) {
      const std::string se = row.at(std::string("se_") + e);
      if (se == "NA") {
        CHECK(row.at(e) == "NA");
        continue;
      }
      const std::string what = row.at("statistic") + " " + e;
      CHECK_MESSAGE(std::stod(se) > 0.0, what);
      ++checked;
    }
  }
  CHECK(checked > 50);
  // Draws are written one line per replication and entry.
  const Table d = read_table(dir / "out" / "draws.csv");
  CHECK(d.rows.size() > 8 * 50);
  CHECK(has_file(dir / "out" / "table6_mean_participants.csv"));
}

TEST_CASE("all-participants data has zero selection and participation rows with zero SE") {
  const fs::path dir = scratch("allin");
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::ostringstream csv;
  csv << "wage,works,female,kids,age\n";
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < 300; ++i) {
      const double x = unif(gen);
      csv << 1.0 + 0.3 * d + 0.5 * x + noise(gen) << ",1," << d << "," << i % 3 << "," << x << "\n";
    }
  }
  std::ofstream(dir / "data.csv", std::ios::binary) << csv.str();
  const nlohmann::json cfg{{"schema",
                            {{"outcome", "wage"},
                             {"selection", "works"},
                             {"group", "female"},
                             {"instrument", "kids"},
                             {"covariates", {"age"}}}}};
  std::ofstream(dir / "config.json") << cfg.dump();
  auto args = fit_args(dir, dir / "out", "bootstrap");
  args.push_back("--bootstrap.replications=5");
  const auto r = run(args);
  REQUIRE(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);

  const Table s = read_table(dir / "out" / "summary.csv");
  std::size_t outcome_rows = 0;
  for (const auto& row : s.rows) {
    if (row.at("decomposition") == "participation") {
      for (const char* e : {"total", "EC", "CC"}) {
        CHECK(std::stod(row.at(e)) == 0.0);
        CHECK(std::stod(row.at(std::string("se_") + e)) == 0.0);
      }
    }
    if (row.at("decomposition") != "outcome") continue;
    ++outcome_rows;
    for (const char* e : {"SC", "PC"}) {
      CHECK(std::stod(row.at(e)) == 0.0);
      CHECK(std::stod(row.at(std::string("se_") + e)) == 0.0);
    }
    CHECK(std::stod(row.at("se_CC")) > 0.0);
  }
  CHECK(outcome_rows == 12);
}
