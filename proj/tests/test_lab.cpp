#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "fpaccel/lab.hpp"

using namespace fpaccel;
using namespace fpaccel::lab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_config(const std::string& outdir) {
  json j;
  j["schema"] = 1;
  j["seed"] = 2;
  j["problem"] = {{"dims", {6, 6, 6}},
                  {"rank", 2},
                  {"collinearity", 0.5},
                  {"noise_homo", 1.0},
                  {"noise_hetero", 1.0}};
  j["methods"] = json::array({json{{"kind", "fixed_point"}, {"map", "als"},
                                   {"name", "als"}}});
  j["max_iter"] = 10;
  j["refine_max_iter"] = 20000;
  j["output_dir"] = outdir;
  j["analysis"] = {{"estimate_window", 5}};
  return j;
}

std::string write_config(const json& j, const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream os(p);
  os << j.dump(2);
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("lab");

TEST_CASE("config parser rejects a missing seed") {
  json j = minimal_config("x");
  j.erase("seed");
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse(j),
                       doctest::Contains("seed"), ConfigError);
}

TEST_CASE("config parser names the offending method key") {
  json j = minimal_config("x");
  j["methods"][0]["kind"] = "frobnicate";
  try {
    ExperimentConfig::parse(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("methods[0].kind") != std::string::npos);
    CHECK(what.find("frobnicate") != std::string::npos);
  }
}

TEST_CASE("config parser requires at least one method") {
  json j = minimal_config("x");
  j["methods"] = json::array();
  CHECK_THROWS_AS(ExperimentConfig::parse(j), ConfigError);
}

TEST_CASE("config parser accepts stationary coefficients and windows") {
  json j = minimal_config("x");
  j["methods"] = json::array(
      {json{{"kind", "saa"}, {"map", "als"}, {"beta", {0.3}}},
       json{{"kind", "sngmres"}, {"map", "als"}, {"beta", {0.1, 0.2}}},
       json{{"kind", "aa"}, {"map", "als"}, {"m", "inf"}}});
  const ExperimentConfig cfg = ExperimentConfig::parse(j);
  CHECK(cfg.methods[0].window == 1);
  CHECK(cfg.methods[1].window == 1);
  CHECK(cfg.methods[2].window == MethodSpec::kUnboundedWindow);
}

TEST_CASE("minimal run emits a trace with max_iter+1 rows and exit 0") {
  const std::string outdir =
      (fs::temp_directory_path() / "fpaccel_min_run").string();
  fs::remove_all(outdir);
  const std::string cfg =
      write_config(minimal_config(outdir), "fpaccel_min.json");
  CHECK(cmd_run(cfg) == 0);

  const std::string csv = slurp(fs::path(outdir) / "trace_als.csv");
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == 12);  // header + 11 records
  CHECK(csv.rfind("k,f,gnorm,rnorm,fgap", 0) == 0);
  CHECK(fs::exists(fs::path(outdir) / "report.json"));
  CHECK(fs::exists(fs::path(outdir) / "xstar.fp"));
}

TEST_CASE("identical config and seed produce byte-identical traces") {
  const std::string out_a =
      (fs::temp_directory_path() / "fpaccel_det_a").string();
  const std::string out_b =
      (fs::temp_directory_path() / "fpaccel_det_b").string();
  fs::remove_all(out_a);
  fs::remove_all(out_b);
  json base = minimal_config(out_a);
  base["methods"].push_back(
      json{{"kind", "saa"}, {"map", "als"}, {"beta", "predicted"},
           {"name", "saa1"}});
  CHECK(cmd_run(write_config(base, "fpaccel_det_a.json")) == 0);
  base["output_dir"] = out_b;
  CHECK(cmd_run(write_config(base, "fpaccel_det_b.json")) == 0);
  for (const char* name : {"trace_als.csv", "trace_saa1.csv"}) {
    CHECK(slurp(fs::path(out_a) / name) == slurp(fs::path(out_b) / name));
    CHECK(!slurp(fs::path(out_a) / name).empty());
  }
}

TEST_CASE("unknown config files exit with status 2") {
  CHECK(cmd_run("/nonexistent/fpaccel.json") == 2);
}

TEST_CASE("run report theory values recompute from the stored facts") {
  const std::string outdir =
      (fs::temp_directory_path() / "fpaccel_theory").string();
  fs::remove_all(outdir);
  json j = minimal_config(outdir);
  j["max_iter"] = 60;
  j["methods"] = json::array(
      {json{{"kind", "fixed_point"}, {"map", "als"}, {"name", "als"}},
       json{{"kind", "saa"}, {"map", "als"}, {"beta", "predicted"},
            {"name", "saa1-als"}},
       json{{"kind", "sngmresr"}, {"map", "als"}, {"beta", "predicted"},
            {"name", "red1-als"}},
       json{{"kind", "saa"}, {"map", "sd"}, {"beta", "predicted"},
            {"name", "saa1-sd"}},
       json{{"kind", "sngmresr"}, {"map", "sd"}, {"beta", "predicted"},
            {"name", "red1-sd"}}});
  REQUIRE(cmd_run(write_config(j, "fpaccel_theory.json")) == 0);

  const json report = json::parse(slurp(fs::path(outdir) / "report.json"));
  int checked = 0;
  for (const auto& row : report["methods"]) {
    if (row["rho_theory"].is_null()) continue;
    const double stored = row["rho_theory"].get<double>();
    const double alpha = row.contains("alpha") ? row["alpha"].get<double>() : 0.0;
    const double again = recompute_theory(row["theory_formula"].get<std::string>(),
                                          report["facts"], alpha);
    CHECK(stored == doctest::Approx(again).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("sd_factors table reproduces the reference factor row") {
  json j = minimal_config("unused");
  j["analysis"]["kappa_bars"] = {22.76};
  const std::string cfg = write_config(j, "fpaccel_tbl.json");
  const std::string out =
      (fs::temp_directory_path() / "fpaccel_sd_factors.csv").string();
  REQUIRE(cmd_table("sd_factors", cfg, out) == 0);
  const std::string csv = slurp(out);
  std::istringstream is(csv);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header ==
        "kappa_bar,rho_sd,rho_saa1_one_over_L,rho_saa1_optimal,rho_sngmresr1");
  double kappa, rho_sd, rho_1l, rho_opt, rho_red;
  std::replace(row.begin(), row.end(), ',', ' ');
  std::istringstream rs(row);
  rs >> kappa >> rho_sd >> rho_1l >> rho_opt >> rho_red;
  CHECK(kappa == doctest::Approx(22.76));
  CHECK(rho_sd == doctest::Approx(0.9158).epsilon(5e-4));
  CHECK(rho_1l == doctest::Approx(0.7904).epsilon(5e-4));
  CHECK(rho_opt == doctest::Approx(0.7597).epsilon(5e-4));
  CHECK(std::abs(rho_red - 0.6543) < 1.5e-3);
}

TEST_CASE("unknown table kinds exit with status 2") {
  const std::string cfg = write_config(minimal_config("x"), "fpaccel_tbl2.json");
  CHECK(cmd_table("nope", cfg, "/tmp/fpaccel_nope.csv") == 2);
}

TEST_SUITE_END();
