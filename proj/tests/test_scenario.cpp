#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

namespace mixdta {
namespace {

const fs::path kData = MIXDTA_DATA_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mixdta_scenario_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json two_route_doc() {
  return nlohmann::json::parse(R"({
    "network": {"file": "two_route/network.json"},
    "demand": {"od_file": "two_route/od.csv", "window_end_s": 800}
  })");
}

std::string error_of(const nlohmann::json& doc) {
  try {
    validate(parse_scenario(doc, kData));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Scenario, DefaultsMaterialized) {
  const auto cfg = parse_scenario(two_route_doc(), kData);
  validate(cfg);
  const auto eff = effective_config(cfg);
  EXPECT_DOUBLE_EQ(eff["dta"]["theta"].get<double>(), 0.05);
  EXPECT_DOUBLE_EQ(eff["dta"]["gamma"].get<double>(), 50.0);
  EXPECT_EQ(eff["dta"]["k_max"].get<int>(), 4);
  EXPECT_DOUBLE_EQ(eff["dta"]["interval_s"].get<double>(), 900.0);
  EXPECT_DOUBLE_EQ(eff["loader"]["l_eff_m"].get<double>(), 7.5);
  EXPECT_DOUBLE_EQ(eff["loader"]["headways"]["jam_free"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(eff["loader"]["reroute_period_s"].get<double>(), 60.0);
  EXPECT_DOUBLE_EQ(eff["classes"]["HDV"]["tau"].get<double>(), 1.06);
  EXPECT_EQ(eff["classes"]["CAV"]["routing"].get<std::string>(), "SO");
  EXPECT_TRUE(fs::path(eff["network"]["file"].get<std::string>()).is_absolute());
}

TEST(Scenario, EffectiveConfigIsIdempotent) {
  for (const auto* name : {"two_route.json", "sioux_falls.json", "random_network.json"}) {
    const auto cfg = load_scenario(kData / "scenarios" / name);
    validate(cfg);
    const auto once = effective_config(cfg);
    const auto again = effective_config(parse_scenario(once, "/nonexistent"));
    EXPECT_EQ(once, again) << name;
  }
}

TEST(Scenario, FieldLevelErrors) {
  auto doc = two_route_doc();
  doc["pr_cav"] = 120;
  EXPECT_NE(error_of(doc).find("pr_cav"), std::string::npos);

  doc = two_route_doc();
  doc["classes"]["HDV"]["tau"] = 0;
  EXPECT_NE(error_of(doc).find("classes.HDV.tau"), std::string::npos);

  doc = two_route_doc();
  doc["classes"]["CAV"]["tau"] = -1;
  EXPECT_NE(error_of(doc).find("classes.CAV.tau"), std::string::npos);

  doc = two_route_doc();
  doc["network"]["file"] = "nowhere/net.json";
  EXPECT_NE(error_of(doc).find("nowhere/net.json"), std::string::npos);

  doc = two_route_doc();
  doc["dta"]["thetta"] = 0.1;
  EXPECT_NE(error_of(doc).find("dta.thetta: unknown field"), std::string::npos);

  doc = two_route_doc();
  doc["dta"]["theta"] = "big";
  EXPECT_NE(error_of(doc).find("dta.theta: expected a number"), std::string::npos);

  doc = two_route_doc();
  doc["network"]["generator"] = nlohmann::json::object();
  EXPECT_NE(error_of(doc).find("exactly one"), std::string::npos);

  doc = two_route_doc();
  doc["demand"].erase("od_file");
  EXPECT_NE(error_of(doc).find("demand"), std::string::npos);

  doc = two_route_doc();
  doc["classes"]["CAV"]["routing"] = "XX";
  EXPECT_NE(error_of(doc).find("classes.CAV.routing"), std::string::npos);

  doc = two_route_doc();
  doc["loader"]["horizon_s"] = 100;
  EXPECT_NE(error_of(doc).find("window_end_s"), std::string::npos);

  doc = two_route_doc();
  doc["classes"]["HDV"]["reroute_probability"] = 0.2;
  EXPECT_NE(error_of(doc).find("classes.HDV.reroute_probability"), std::string::npos);

  EXPECT_EQ(error_of(two_route_doc()), "");
}

TEST(Scenario, ZeroDemandRun) {
  auto doc = two_route_doc();
  doc["demand"]["od_file"] = (kData.parent_path() / "tests/configs/empty_od.csv").string();
  auto cfg = parse_scenario(doc, kData);
  cfg.output.dir = scratch("zero");
  const auto s = run_scenario(cfg);
  EXPECT_EQ(s.metrics.total_travel_time_h, 0.0);
  EXPECT_EQ(s.iterations, 1);
  EXPECT_EQ(s.criterion, StopCriterion::Epsilon);
  for (const auto* f : {"iterations.csv", "trips.csv", "summary.csv", "volumes.csv", "config.json"}) {
    EXPECT_TRUE(fs::exists(cfg.output.dir / f)) << f;
  }
}

ScenarioConfig small_two_route(const fs::path& out) {
  auto doc = two_route_doc();
  doc["dta"]["max_iterations"] = 8;
  doc["pr_cav"] = 30;
  doc["output"]["routes"] = true;
  auto cfg = parse_scenario(doc, kData);
  cfg.output.dir = out;
  return cfg;
}

TEST(Scenario, RunWritesReadableOutputs) {
  const auto cfg = small_two_route(scratch("run"));
  const auto s = run_scenario(cfg);
  EXPECT_EQ(s.vehicles, 1000u);
  const auto trips = slurp(cfg.output.dir / "trips.csv");
  EXPECT_EQ(trips.rfind("vehicle_id,class,depart_s,arrive_s,distance_m,reroute_count,finished\n", 0), 0u);
  EXPECT_EQ(std::count(trips.begin(), trips.end(), '\n'), 1001);
  const auto routes = slurp(cfg.output.dir / "routes.csv");
  EXPECT_EQ(routes.rfind("vehicle_id,iteration,path_rank,link_sequence,cost_s\n", 0), 0u);
  const auto summary = slurp(cfg.output.dir / "summary.csv");
  EXPECT_NE(summary.find(std::string(to_string(s.criterion))), std::string::npos);
}

TEST(Scenario, RerunIsByteIdentical) {
  const auto a = small_two_route(scratch("det_a"));
  auto b = a;
  run_scenario(a);
  run_scenario(b);
  for (const auto* f : {"iterations.csv", "trips.csv", "summary.csv", "volumes.csv", "routes.csv"}) {
    EXPECT_EQ(slurp(a.output.dir / f), slurp(b.output.dir / f)) << f;
  }
}

TEST(Sweep, RowsFollowRequestOrder) {
  auto cfg = small_two_route(scratch("sweep"));
  cfg.dta.max_iterations = 3;
  const std::vector<double> prs{60, 0, 20};
  const auto rows = run_sweep(cfg, prs, 2);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].pr, 60);
  EXPECT_EQ(rows[1].pr, 0);
  EXPECT_EQ(rows[1].ttt_improvement_pct, 0.0);
  const auto csv_text = slurp(cfg.output.dir / "sweep.csv");
  std::istringstream in(csv_text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "pr,ttt_h,avg_speed_kmh,avg_distance_km,final_gap_s,ttt_improvement_pct");
  for (double pr : prs) {
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, line.find(',')), csv::num(pr));
    EXPECT_TRUE(fs::exists(cfg.output.dir / pr_dir_name(pr) / "iterations.csv"));
  }
  // Concurrency does not change results.
  auto serial = cfg;
  serial.output.dir = scratch("sweep_serial");
  run_sweep(serial, prs, 1);
  EXPECT_EQ(slurp(serial.output.dir / "sweep.csv"), csv_text);
}

TEST(Sweep, ZeroOnlyHasNoImprovement) {
  auto cfg = small_two_route(scratch("sweep0"));
  cfg.dta.max_iterations = 2;
  const auto rows = run_sweep(cfg, {0});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].ttt_improvement_pct, 0.0);
}

TEST(Sweep, ReferenceRunWhenZeroMissing) {
  auto cfg = small_two_route(scratch("sweep_ref"));
  cfg.dta.max_iterations = 2;
  const auto rows = run_sweep(cfg, {100});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(fs::exists(cfg.output.dir / pr_dir_name(0) / "summary.csv"));
  EXPECT_THROW(run_sweep(cfg, {20, 20}), ValidationError);
  EXPECT_THROW(run_sweep(cfg, {120}), ValidationError);
}

}  // namespace
}  // namespace mixdta
