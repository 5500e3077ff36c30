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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "histpanel/panel.hpp"
#include "histpanel/table_model.hpp"
#include "histpanel/types.hpp"

namespace histpanel {

// ---------------------------------------------------------------------------
// Outlier detection

enum class OutlierKind { population, timeseries, crossfield, duplicate };
std::string_view to_string(OutlierKind kind);

struct OutlierFlag {
  OutlierKind kind = OutlierKind::population;
  std::string state;
  std::string county_id;
  int year = 0;
  FieldCategory field = FieldCategory::other;
  /// Sub-rule for timeseries flags: "reversal", "first", "last".
  std::string rule;
  std::map<std::string, double> detail;

  /// Stable identifier, e.g. "crossfield:MI-016:1923:Automobiles".
  std::string id() const;
};

struct OutlierThresholds {
  double population_rate = 2.0;
  double crossfield_low = 0.3;
  double crossfield_high = 1.0;
  double duplicate_dispersion = 0.5;
  double change_pct = 100.0;
  double reversal_min_value = 100.0;
  double endpoint_min_value = 500.0;
};

// Ratio predicates, strict at every threshold.
bool population_ratio_flagged(double ratio, const OutlierThresholds& t = {});
bool crossfield_ratio_flagged(double ratio, const OutlierThresholds& t = {});
bool dispersion_ratio_flagged(double ratio, const OutlierThresholds& t = {});

/// Percentage change magnitude between adjacent observations: declines are
/// measured against the later value, increases against the earlier one.
/// Infinite when the denominator is zero and the values differ.
double change_magnitude_pct(double from, double to);

struct DispersionStats {
  double median = 0.0;
  double stdev = 0.0;  // population standard deviation
  double ratio = 0.0;  // stdev / median; infinite when median is 0 and stdev > 0
};
DispersionStats dispersion(std::vector<double> values);

/// `notes` collects observations skipped for lack of a positive population.
std::vector<OutlierFlag> detect_population_outliers(const std::vector<PanelObservation>& panel,
                                                    const PopulationTable& population,
                                                    const OutlierThresholds& t = {},
                                                    std::vector<std::string>* notes = nullptr);
std::vector<OutlierFlag> detect_timeseries_outliers(const std::vector<PanelObservation>& panel,
                                                    const OutlierThresholds& t = {});
std::vector<OutlierFlag> detect_crossfield_outliers(const std::vector<PanelObservation>& panel,
                                                    const OutlierThresholds& t = {});
std::vector<OutlierFlag> detect_duplicate_outliers(const std::vector<PanelObservation>& readings,
                                                   const OutlierThresholds& t = {});

/// Series helper used by the timeseries detector: indices of flagged points
/// and the sub-rule for each.
std::vector<std::pair<std::size_t, std::string>> timeseries_flags(const std::vector<double>& series,
                                                                  const OutlierThresholds& t = {});

/// All four detectors over a built panel, in a stable order.
std::vector<OutlierFlag> detect_outliers(const PanelBuild& build, const PopulationTable& population,
                                         const OutlierThresholds& t = {},
                                         std::vector<std::string>* notes = nullptr);

// ---------------------------------------------------------------------------
// Gold-standard evaluation

struct GoldCell {
  std::string table_id;
  std::string state;
  int year = 0;
  std::string county_id;
  FieldCategory field = FieldCategory::other;
  std::optional<double> value;
};

/// CSV columns: table_id,state,year,county_id,field,value (value may be empty).
std::vector<GoldCell> load_gold(const std::string& csv_path);
void write_gold(const std::string& path, const std::vector<GoldCell>& cells);
GoldKeySet gold_keys(const std::vector<GoldCell>& cells);

/// One gold cell with a numeric true value and whatever was extracted there.
struct EvalCell {
  std::string table_id;
  std::string state;
  int year = 0;
  std::string county_id;
  FieldCategory field = FieldCategory::other;
  double truth = 0.0;
  std::optional<double> extracted;  // rounded to a whole count
};

struct ErrorOnlyBlock {
  std::size_t cells = 0;
  std::size_t tables = 0;
  double r_squared_pct = 0.0;  // NaN with fewer than two incorrect cells
  double mean_error_units = 0.0;
  double mean_abs_error_units = 0.0;
  double median_error_units = 0.0;
  double median_abs_error_units = 0.0;
  double mean_error_pct = 0.0;
  double mean_abs_error_pct = 0.0;
  double median_error_pct = 0.0;
  double median_abs_error_pct = 0.0;
  double p75_abs_error_pct = 0.0;
  double p95_abs_error_pct = 0.0;
};

struct EvalReport {
  double r_squared_pct = 0.0;
  double total_error_rate_pct = 0.0;
  double missing_output_pct = 0.0;
  double incorrect_output_pct = 0.0;
  double mean_error_units = 0.0;
  double mean_abs_error_units = 0.0;
  double mean_error_pct = 0.0;
  double mean_abs_error_pct = 0.0;
  double median_abs_error_pct = 0.0;
  ErrorOnlyBlock error_only;

  std::size_t cells = 0;       // gold cells with a numeric true value
  std::size_t tables = 0;
  std::size_t matched = 0;     // both present
  std::size_t missing = 0;
  std::size_t incorrect = 0;
  std::size_t spurious = 0;    // extracted where the gold cell is empty
  std::size_t zero_truth = 0;  // left out of percentage metrics
};

struct EvalOptions {
  /// R² as 1 - SSres/SStot of extracted values predicting the truth,
  /// instead of the squared correlation.
  bool prediction_r2 = false;
};

/// Pairs gold cells with extracted values. `extracted` holds at most one
/// table per table id. `spurious` receives the count of extracted values
/// sitting on empty gold cells.
std::vector<EvalCell> match_gold(const std::vector<AlignedTable>& extracted,
                                 const std::vector<GoldCell>& gold, std::size_t* spurious = nullptr);

/// Throws EmptyEvaluation when no cell has both values.
EvalReport evaluate_cells(std::vector<EvalCell> cells, const EvalOptions& options = {});
EvalReport evaluate_against_gold(const std::vector<AlignedTable>& extracted,
                                 const std::vector<GoldCell>& gold, const EvalOptions& options = {});

std::string eval_report_text(const EvalReport& report, const std::string& title = "Overall Performance Metrics");
std::string eval_report_json(const EvalReport& report);

struct FailureRate {
  std::string source;
  std::size_t failures = 0;
  std::size_t tables = 0;
  double pct = 0.0;
};

std::vector<FailureRate> critical_failure_rate(
    const std::map<std::string, std::vector<StructuralReport>>& reports_by_source);
std::string failure_rate_text(const std::vector<FailureRate>& rates);

enum class GroupBy { decade, state };

struct GroupReport {
  std::string group;
  std::size_t cells = 0;
  std::size_t tables = 0;
  std::optional<EvalReport> report;  // empty when no cell in the group matched
};

std::vector<GroupReport> breakdown(const std::vector<EvalCell>& cells, GroupBy group_by,
                                   const EvalOptions& options = {});
std::string breakdown_csv(const std::vector<GroupReport>& groups);

struct ConvergenceConfig {
  std::size_t folds = 100;
  std::size_t step = 1;
  double dev_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct ConvergencePoint {
  std::size_t folds_used = 0;
  std::size_t tables = 0;
  EvalReport report;
};

struct ConvergenceResult {
  std::vector<std::string> dev_tables;
  std::vector<std::string> eval_tables;
  std::vector<ConvergencePoint> points;
};

/// Shuffles table ids with the seed, splits them into `folds` folds, keeps
/// the trailing (1 - dev_fraction) share of folds for evaluation and
/// evaluates cumulative unions of those folds every `step` folds. The last
/// point always covers the whole evaluation split.
ConvergenceResult convergence_analysis(const std::vector<EvalCell>& cells, const ConvergenceConfig& config,
                                       const EvalOptions& options = {});
std::string convergence_csv(const ConvergenceResult& result);

/// Deterministic Fisher-Yates over a 64-bit Mersenne Twister, identical on
/// every platform.
void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed);

}  // namespace histpanel
