#include "doctest.h"

#include "gcf/error.hpp"
#include "gcf/report.hpp"

#include <sstream>

using namespace gcf;

TEST_CASE("estimate JSON") {
  AteEstimate est(Method::gcf, 3, 100, 0.05);
  for (const auto& pair : all_pairs(3)) est.set_pair(pair, pair.j - pair.j_prime, 1.0, -1.0, 1.0);
  const auto doc = to_json(est, {"a", "b", "c"});
  CHECK(doc["schema_version"] == kSchemaVersion);
  CHECK(doc["method"] == "GCF");
  CHECK(doc["pairs"].size() == 3);
  CHECK(doc["pairs"][2]["arm_j"] == "b");
  CHECK(doc["pairs"][2]["arm_j_prime"] == "c");
  CHECK(doc["estimates"][1][0] == 1.0);
  CHECK(doc["multiplier"].get<double>() == doctest::Approx(simultaneous_multiplier(3, 0.05)));
  CHECK(doc["interval"] == "simultaneous");
}

TEST_CASE("estimate table") {
  AteEstimate est(Method::dif, 2, 10, 0.05);
  est.set_pair({1, 2}, 0.5, 2.0, 0.0, 1.0);
  const auto table = format_estimate_table({est});
  CHECK(table.find("tau_1,2") != std::string::npos);
  CHECK(table.find("0.5000") != std::string::npos);
  CHECK(table.find("std_error") != std::string::npos);
}

TEST_CASE("design JSON") {
  const auto doc = nlohmann::json::parse(R"({"n": 800, "reps": 7, "estimators": ["gcf", "ORACLE"], "xi": 0.01})");
  const auto design = design_from_json(doc, design1_adequate());
  CHECK(design.n == 800);
  CHECK(design.reps == 7);
  CHECK(design.xi == 0.01);
  CHECK(design.estimators == std::vector<Method>{Method::gcf, Method::oracle});
  CHECK(design.interval == Interval::per_pair);
  CHECK(design_from_json(nlohmann::json::parse(R"({"interval": "simultaneous"})"), design1_adequate()).interval ==
        Interval::simultaneous);
  CHECK(design.alphas == design1_adequate().alphas);

  CHECK_THROWS_WITH_AS(design_from_json(nlohmann::json::parse(R"({"nn": 5})"), design1_adequate()),
                       doctest::Contains("unknown key 'nn'"), ArgumentError);
  CHECK_THROWS_AS(design_from_json(nlohmann::json::parse(R"({"n": "many"})"), design1_adequate()),
                  ArgumentError);
  CHECK_THROWS_AS(design_from_json(nlohmann::json::parse(R"({"alphas": [[1, 2], [3]]})"), design1_adequate()),
                  ArgumentError);

  // Round trip through the serializer.
  const auto again = design_from_json(to_json(design3_j6()), SimulationDesign{});
  CHECK(again.alphas == design3_j6().alphas);
  CHECK(again.betas == design3_j6().betas);
  CHECK(again.n_arms == 6);
}

TEST_CASE("metrics CSV and table") {
  MetricsReport report;
  report.design_name = "d";
  report.n_arms = 2;
  report.n = 50;
  report.reps_requested = report.reps_succeeded = 4;
  MetricsCell cell;
  cell.method = Method::gcf;
  cell.pair = {1, 2};
  cell.truth = -1.0;
  cell.bias = 0.25;
  cell.rmse = 0.5;
  cell.coverage = 0.75;
  cell.count = 4;
  report.cells.push_back(cell);

  std::ostringstream csv;
  write_metrics_csv(report, csv);
  CHECK(csv.str() ==
        "design,n,method,j,j_prime,truth,bias,rmse,coverage,mean_ci_width,mean_variance,count\n"
        "d,50,GCF,1,2,-1,0.25,0.5,0.75,0,0,4\n");
  const auto table = format_metrics_table(report);
  CHECK(table.find("75.00%") != std::string::npos);
  CHECK(table.find("0.2500") != std::string::npos);
  CHECK(to_json(report)["cells"][0]["coverage"] == 0.75);
}
