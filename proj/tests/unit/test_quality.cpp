/*
 * Copyright 2026 The histpanel Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "histpanel/error.hpp"
#include "histpanel/quality.hpp"
#include "histpanel/synthetic.hpp"
#include "support.hpp"

using namespace histpanel;

namespace {

PanelObservation obs(const std::string& county, int year, FieldCategory field, double value) {
  PanelObservation o;
  o.county_id = county;
  o.state = "MI";
  o.year = year;
  o.field = field;
  o.value = value;
  o.provenance.state = "MI";
  o.provenance.year = year;
  return o;
}

EvalCell cell(const std::string& table, double truth, std::optional<double> extracted, int year = 1923,
              const std::string& state = "MI") {
  static int counter = 0;
  EvalCell c;
  c.table_id = table;
  c.state = state;
  c.year = year;
  c.county_id = "C" + std::to_string(counter++);
  c.field = FieldCategory::automobiles;
  c.truth = truth;
  c.extracted = extracted;
  return c;
}

double sd(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / v.size());
}

}  // namespace

TEST(OutlierPredicates, StrictBoundaries) {
  const double up = std::nextafter(2.0, 3.0);
  EXPECT_FALSE(population_ratio_flagged(2.0));
  EXPECT_TRUE(population_ratio_flagged(up));
  EXPECT_FALSE(crossfield_ratio_flagged(0.3));
  EXPECT_TRUE(crossfield_ratio_flagged(std::nextafter(0.3, 0.0)));
  EXPECT_FALSE(crossfield_ratio_flagged(std::nextafter(0.3, 1.0)));
  EXPECT_FALSE(crossfield_ratio_flagged(1.0));
  EXPECT_TRUE(crossfield_ratio_flagged(std::nextafter(1.0, 2.0)));
  EXPECT_FALSE(dispersion_ratio_flagged(0.5));
  EXPECT_TRUE(dispersion_ratio_flagged(std::nextafter(0.5, 1.0)));
}

TEST(PopulationOutliers, Examples) {
  PopulationTable pop;
  pop.emplace("MI-001", PopulationSeries("MI-001", {{1920, 1000.0}, {1930, 1000.0}}));
  pop.emplace("MI-002", PopulationSeries("MI-002", {{1920, 0.0}, {1930, 0.0}}));
  const std::vector<PanelObservation> panel = {obs("MI-001", 1923, FieldCategory::automobiles, 2001),
                                               obs("MI-001", 1923, FieldCategory::trucks, 2000),
                                               obs("MI-002", 1923, FieldCategory::automobiles, 5)};
  std::vector<std::string> notes;
  const auto flags = detect_population_outliers(panel, pop, {}, &notes);
  ASSERT_EQ(flags.size(), 1u);
  EXPECT_EQ(flags[0].field, FieldCategory::automobiles);
  EXPECT_EQ(flags[0].county_id, "MI-001");
  EXPECT_EQ(notes.size(), 1u);
}

TEST(Timeseries, ChangeMagnitude) {
  EXPECT_DOUBLE_EQ(change_magnitude_pct(1000, 400), 150.0);
  EXPECT_DOUBLE_EQ(change_magnitude_pct(400, 1100), 175.0);
  EXPECT_DOUBLE_EQ(change_magnitude_pct(600, 200), 200.0);
  EXPECT_TRUE(std::isinf(change_magnitude_pct(0, 5)));
  EXPECT_EQ(change_magnitude_pct(7, 7), 0.0);
}

TEST(Timeseries, WorkedExamples) {
  const auto flags = timeseries_flags({1000, 400, 1100});
  const std::vector<std::pair<std::size_t, std::string>> want = {{0, "first"}, {1, "reversal"}, {2, "last"}};
  EXPECT_EQ(flags, want);

  EXPECT_TRUE(timeseries_flags({800, 800, 800, 800}).empty());

  const auto first = timeseries_flags({600, 200});
  ASSERT_FALSE(first.empty());
  EXPECT_EQ(first[0].first, 0u);
  EXPECT_EQ(first[0].second, "first");
}

TEST(Timeseries, SmallValuesNotReversals) {
  // Middle point is below the 100 floor.
  for (const auto& [i, rule] : timeseries_flags({300, 90, 300})) EXPECT_NE(rule, "reversal");
}

TEST(Timeseries, GapsUseAdjacentObservedYears) {
  std::vector<PanelObservation> panel = {obs("MI-001", 1920, FieldCategory::automobiles, 1000),
                                         obs("MI-001", 1925, FieldCategory::automobiles, 400),
                                         obs("MI-001", 1929, FieldCategory::automobiles, 1100)};
  std::vector<int> reversal_years;
  for (const auto& f : detect_timeseries_outliers(panel)) {
    if (f.rule == "reversal") reversal_years.push_back(f.year);
  }
  EXPECT_EQ(reversal_years, std::vector<int>{1925});
}

TEST(Crossfield, Examples) {
  auto run = [](double autos, double total) {
    return detect_crossfield_outliers({obs("MI-001", 1923, FieldCategory::automobiles, autos),
                                       obs("MI-001", 1923, FieldCategory::total_vehicles, total)})
        .size();
  };
  EXPECT_EQ(run(200, 1000), 1u);
  EXPECT_EQ(run(1100, 1000), 1u);
  EXPECT_EQ(run(300, 1000), 0u);
  EXPECT_EQ(run(1000, 1000), 0u);
}

TEST(Duplicates, Examples) {
  auto run = [](double a, double b) {
    return detect_duplicate_outliers(
               {obs("MI-001", 1923, FieldCategory::automobiles, a), obs("MI-001", 1923, FieldCategory::automobiles, b)})
        .size();
  };
  EXPECT_EQ(run(100, 100), 0u);
  EXPECT_EQ(run(100, 300), 0u);
  EXPECT_EQ(run(100, 400), 1u);
  const DispersionStats d = dispersion({100, 400});
  EXPECT_DOUBLE_EQ(d.median, 250.0);
  EXPECT_DOUBLE_EQ(d.stdev, 150.0);
  EXPECT_DOUBLE_EQ(d.ratio, 0.6);
  EXPECT_TRUE(std::isinf(dispersion({0, 0, 5}).ratio));
}

TEST(Evaluate, TenCellFixture) {
  std::vector<EvalCell> cells;
  for (int i = 0; i < 5; ++i) cells.push_back(cell("T1", 100 + i, 100 + i));
  cells.push_back(cell("T1", 50, std::nullopt));
  cells.push_back(cell("T2", 60, std::nullopt));
  cells.push_back(cell("T2", 100, 110));
  cells.push_back(cell("T2", 200, 180));
  cells.push_back(cell("T2", 40, 41));
  const EvalReport r = evaluate_cells(cells);
  EXPECT_EQ(r.cells, 10u);
  EXPECT_EQ(r.missing, 2u);
  EXPECT_EQ(r.incorrect, 3u);
  EXPECT_DOUBLE_EQ(r.missing_output_pct, 20.0);
  EXPECT_DOUBLE_EQ(r.incorrect_output_pct, 30.0);
  EXPECT_DOUBLE_EQ(r.total_error_rate_pct, 50.0);
  EXPECT_DOUBLE_EQ(r.total_error_rate_pct, r.missing_output_pct + r.incorrect_output_pct);
  EXPECT_EQ(r.error_only.cells, 3u);
  // Errors +10, -20, +1 over eight matched cells.
  EXPECT_DOUBLE_EQ(r.mean_error_units, -9.0 / 8.0);
  EXPECT_DOUBLE_EQ(r.error_only.mean_abs_error_units, 31.0 / 3.0);
}

TEST(Evaluate, Cheboygan) {
  const EvalReport r = evaluate_cells({cell("MI-1923", 158, 178), cell("MI-1923", 733, 733)});
  EXPECT_EQ(r.incorrect, 1u);
  EXPECT_DOUBLE_EQ(r.error_only.mean_error_units, 20.0);
  EXPECT_NEAR(r.error_only.mean_error_pct, 12.66, 0.01);
}

TEST(Evaluate, IdentityIsPerfect) {
  std::vector<EvalCell> cells;
  for (int i = 0; i < 30; ++i) cells.push_back(cell("T", 10.0 * i + 3, 10.0 * i + 3));
  for (bool prediction : {false, true}) {
    const EvalReport r = evaluate_cells(cells, {prediction});
    EXPECT_DOUBLE_EQ(r.r_squared_pct, 100.0);
    EXPECT_EQ(r.total_error_rate_pct, 0.0);
    EXPECT_EQ(r.mean_abs_error_pct, 0.0);
  }
}

TEST(Evaluate, RSquaredIsCorrelationSquared) {
  // Perfectly linear but biased: correlation-squared is 100, prediction R² is not.
  std::vector<EvalCell> cells;
  for (int i = 1; i <= 10; ++i) cells.push_back(cell("T", i * 10.0, i * 20.0));
  EXPECT_NEAR(evaluate_cells(cells).r_squared_pct, 100.0, 1e-9);
  EXPECT_LT(evaluate_cells(cells, {true}).r_squared_pct, 100.0);
}

TEST(Evaluate, ZeroTruthExcludedFromPercentages) {
  const EvalReport r = evaluate_cells({cell("T", 0, 5), cell("T", 100, 110)});
  EXPECT_EQ(r.zero_truth, 1u);
  EXPECT_DOUBLE_EQ(r.mean_error_pct, 10.0);
}

TEST(Evaluate, NothingMatchedThrows) {
  EXPECT_THROW(evaluate_cells({cell("T", 5, std::nullopt)}), EmptyEvaluation);
  EXPECT_THROW(evaluate_cells({}), EmptyEvaluation);
}

TEST(FailureRate, Examples) {
  StructuralReport ok;
  StructuralReport bad;
  bad.is_critical_failure = true;
  bad.failed_conditions = {StructuralCondition::extra_cells};
  const auto rates = critical_failure_rate({{"baseline", {bad, ok, bad, ok, ok}}, {"llm", {ok, ok, ok, ok, ok}}});
  ASSERT_EQ(rates.size(), 2u);
  std::map<std::string, double> pct;
  for (const auto& r : rates) pct[r.source] = r.pct;
  EXPECT_DOUBLE_EQ(pct.at("baseline"), 40.0);
  EXPECT_DOUBLE_EQ(pct.at("llm"), 0.0);
  EXPECT_NE(failure_rate_text(rates).find("baseline"), std::string::npos);
}

TEST(Breakdown, GroupsPartitionCells) {
  const auto cells = synth::eval_cells(40, 12, 0.05, 0.1, 11);
  for (GroupBy g : {GroupBy::decade, GroupBy::state}) {
    const auto groups = breakdown(cells, g);
    std::size_t total = 0;
    for (const auto& gr : groups) total += gr.cells;
    EXPECT_EQ(total, cells.size());
    const std::string csv = breakdown_csv(groups);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(groups.size() + 1));
  }
}

TEST(Breakdown, DecadeLabels) {
  const auto groups = breakdown({cell("A", 10, 10, 1923), cell("B", 10, 12, 1931)}, GroupBy::decade);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].group, "1920s");
  EXPECT_EQ(groups[1].group, "1930s");
}

TEST(Convergence, FinalPointEqualsEvalSplit) {
  const auto cells = synth::eval_cells(200, 15, 0.02, 0.08, 5);
  ConvergenceConfig config;
  config.folds = 100;
  config.seed = 42;
  const ConvergenceResult r = convergence_analysis(cells, config);
  ASSERT_EQ(r.points.size(), 50u);
  EXPECT_EQ(r.dev_tables.size() + r.eval_tables.size(), 200u);

  const std::set<std::string> eval(r.eval_tables.begin(), r.eval_tables.end());
  std::vector<EvalCell> split;
  for (const auto& c : cells) {
    if (eval.count(c.table_id)) split.push_back(c);
  }
  const EvalReport full = evaluate_cells(split);
  EXPECT_EQ(r.points.back().report.total_error_rate_pct, full.total_error_rate_pct);
  EXPECT_EQ(r.points.back().report.r_squared_pct, full.r_squared_pct);
  EXPECT_EQ(r.points.back().tables, eval.size());

  std::vector<double> head, tail;
  for (std::size_t i = 0; i < 10; ++i) head.push_back(r.points[i].report.total_error_rate_pct);
  for (std::size_t i = 40; i < 50; ++i) tail.push_back(r.points[i].report.total_error_rate_pct);
  EXPECT_LT(sd(tail), sd(head));
}

TEST(Convergence, FoldsMustFit) {
  const auto cells = synth::eval_cells(10, 5, 0.0, 0.1, 1);
  ConvergenceConfig config;
  config.folds = 100;
  EXPECT_THROW(convergence_analysis(cells, config), FoldConfigError);
  config.folds = 0;
  EXPECT_THROW(convergence_analysis(cells, config), FoldConfigError);
}

TEST(Convergence, SameSeedSameSplit) {
  std::vector<std::string> a = {"a", "b", "c", "d", "e", "f", "g"};
  std::vector<std::string> b = a;
  seeded_shuffle(a, 9);
  seeded_shuffle(b, 9);
  EXPECT_EQ(a, b);
  std::vector<std::string> sorted_a = a;
  std::sort(sorted_a.begin(), sorted_a.end());
  EXPECT_EQ(sorted_a, (std::vector<std::string>{"a", "b", "c", "d", "e", "f", "g"}));
}

TEST(Gold, RoundTrip) {
  const std::string dir = testing_support::scratch_dir("gold");
  std::vector<GoldCell> cells(2);
  cells[0] = {"MI-1923", "MI", 1923, "MI-016", FieldCategory::trucks, 158.0};
  cells[1] = {"MI-1923", "MI", 1923, "MI-017", FieldCategory::trucks, std::nullopt};
  write_gold(dir + "/gold.csv", cells);
  const auto back = load_gold(dir + "/gold.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].value, 158.0);
  EXPECT_FALSE(back[1].value.has_value());
  EXPECT_EQ(back[1].county_id, "MI-017");
  // Only cells with a value count as gold coverage.
  EXPECT_EQ(gold_keys(back).size(), 1u);
}
