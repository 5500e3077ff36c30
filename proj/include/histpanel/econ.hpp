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

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "histpanel/panel.hpp"

namespace histpanel {

/// Column-major regression data: `y`, K regressor columns, F fixed-effect
/// factors (group key per row) and a cluster id per row.
struct RegressionSample {
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  std::vector<std::string> x_names;
  std::vector<std::vector<std::string>> fe;
  std::vector<std::string> fe_names;
  std::vector<std::string> cluster;
  /// Row labels, e.g. "MI-001:1930"; carried through absorption.
  std::vector<std::string> row_id;

  std::size_t size() const { return y.size(); }
  /// Throws SampleError when columns disagree in length or values are not finite.
  void check() const;
};

struct AbsorbOptions {
  double tolerance = 1e-10;
  std::size_t max_sweeps = 10000;
  bool drop_singletons = true;
};

struct AbsorbResult {
  RegressionSample sample;          // singletons removed, y and x demeaned
  std::vector<double> y_raw;        // y for the kept rows before demeaning
  std::size_t singletons_dropped = 0;
  std::size_t sweeps = 0;
  std::vector<std::size_t> fe_groups;  // groups per factor after dropping
};

/// Alternating within-group demeaning over every factor until the largest
/// change in a sweep falls below the tolerance. Throws AbsorptionError when
/// the sweep budget runs out.
AbsorbResult absorb_fixed_effects(const RegressionSample& sample, const AbsorbOptions& options = {});

struct RegressionResult {
  std::vector<std::string> names;
  std::vector<double> coef;
  std::vector<double> se;
  std::vector<double> t;
  std::vector<double> p;
  /// Cluster-robust covariance, row-major K x K.
  std::vector<double> vcov;
  double r_squared = 0.0;         // against the variation before absorption
  double within_r_squared = 0.0;
  std::size_t n = 0;
  std::size_t clusters = 0;
  std::vector<std::size_t> fe_groups;
  std::size_t singletons_dropped = 0;
  std::size_t dropped_zero = 0;   // log of zero registrations
  std::optional<double> equality_p;
  std::optional<double> equality_t;
};

/// OLS on an absorbed sample with CR1 cluster-robust variance and t(G-1)
/// p-values. Throws DegenerateRegressor on a regressor without within variation
/// and SampleError with fewer than two clusters.
RegressionResult ols_cluster(const AbsorbResult& absorbed);

/// Convenience: absorb then fit.
RegressionResult fit_fe_ols(const RegressionSample& sample, const AbsorbOptions& options = {});

/// Dummy-variable least squares with the same CR1 variance. Slow; meant for
/// cross-checks on small samples. Singletons are kept.
RegressionResult fit_dummy_ols(const RegressionSample& sample);

/// Two-sided p-value from Student's t with `df` degrees of freedom.
double t_test_p_value(double t, double df);

struct StackedTest {
  double difference = 0.0;  // coef(first) - coef(second)
  double t = 0.0;
  double p = 1.0;
  RegressionResult stacked;
};

/// Pools two single-regressor samples with a dataset tag, interacting the
/// regressor and every fixed-effect factor with the tag, clustering on the
/// shared cluster ids, and tests equality of the two slopes.
StackedTest stacked_equality_test(const RegressionSample& first, const RegressionSample& second,
                                  const AbsorbOptions& options = {});

struct PairedEstimate {
  std::string spec;   // "persistence" or "popgrowth"
  int period_start = 0;
  int period_end = 0;
  RegressionResult llm;
  RegressionResult gold;
  StackedTest test;
};

/// log per-capita at `end_year` on its 10-year lag with state fixed effects,
/// on counties observed in both panels at both dates.
PairedEstimate persistence_spec(const std::vector<PanelObservation>& llm,
                                const std::vector<PanelObservation>& gold, int end_year,
                                FieldCategory field = FieldCategory::total_vehicles);

inline constexpr double kPopgrowthMaxInitialPopulation = 50000.0;

/// log per-capita on log interpolated population over years decade..decade+10
/// with county and state-year fixed effects, for counties whose population at
/// the start of the decade is below 50,000.
PairedEstimate popgrowth_spec(const std::vector<PanelObservation>& llm,
                              const std::vector<PanelObservation>& gold, int decade,
                              const PopulationTable& population,
                              FieldCategory field = FieldCategory::total_vehicles);

/// Regression-table layout: coefficient rows, SEs in parentheses, equality
/// p-values in brackets, R² and N, one column pair per period.
std::string regression_table_text(const std::vector<PairedEstimate>& panel_a,
                                  const std::vector<PairedEstimate>& panel_b);
std::string regression_table_json(const std::vector<PairedEstimate>& estimates);

}  // namespace histpanel
